#include "cps/cli.hpp"

#include <csignal>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cps/corpus.hpp"
#include "cps/engine_config.hpp"
#include "cps/error.hpp"
#include "cps/eval.hpp"
#include "cps/fm_index.hpp"
#include "cps/io.hpp"
#include "cps/service.hpp"
#include "cps/synth.hpp"

namespace cps {

namespace {

/// Flags that mirror EngineConfig keys. Unset flags leave the config alone.
struct EngineFlags {
    std::string config;
    std::optional<std::string> corpus, index, lm, evaluator, reformulator;
    std::optional<int> beam_width, top_b, max_len, top_k, parallelism;
    std::optional<double> alpha, beta;
    bool strict = false;

    void add_to(CLI::App& app) {
        app.add_option("--config", config, "JSON engine config");
        app.add_option("--corpus", corpus, "corpus JSONL");
        app.add_option("--index", index, "index directory from `index build`");
        app.add_option("--beam-width", beam_width);
        app.add_option("--top-b", top_b, "SIDs kept per product");
        app.add_option("--max-len", max_len, "longest SID in tokens");
        app.add_option("--top-k", top_k, "products returned per turn");
        app.add_option("--parallelism", parallelism, "concurrent evaluator calls");
        app.add_option("--lm", lm, "bigram | uniform | remote");
        app.add_option("--alpha", alpha, "bigram smoothing");
        app.add_option("--beta", beta, "bigram query affinity");
        app.add_option("--evaluator", evaluator, "lexical | remote | constant");
        app.add_option("--reformulator", reformulator, "baseline | remote");
        app.add_flag("--strict", strict, "remote failures are errors, not fallbacks");
    }

    EngineConfig resolve() const {
        EngineConfig c = config.empty() ? EngineConfig{} : EngineConfig::load(config);
        if (config.empty()) c.apply_env();
        if (corpus) c.corpus_path = *corpus;
        if (index) c.index_path = *index;
        if (beam_width) c.session.decode.beam_width = *beam_width;
        if (top_b) c.session.decode.top_b = *top_b;
        if (max_len) c.session.decode.max_len = *max_len;
        if (top_k) c.session.top_k = *top_k;
        if (parallelism) c.session.rerank.parallelism = *parallelism;
        if (lm) c.lm = *lm;
        if (alpha) c.bigram.alpha = *alpha;
        if (beta) c.bigram.beta = *beta;
        if (evaluator) c.evaluator = *evaluator;
        if (reformulator) c.reformulator = *reformulator;
        if (strict) c.strict = true;
        return c;
    }
};

std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

int cmd_index_build(const std::string& corpus, const std::string& out_dir, std::ostream& out) {
    auto bundle = build_bundle(corpus);
    write_index_dir(bundle, out_dir);
    out << "indexed " << bundle.corpus->size() << " products, " << bundle.index->sid_count() << " SIDs into "
        << out_dir << "\n";
    return kExitOk;
}

int cmd_retrieve(const EngineFlags& flags, const std::string& query, const std::optional<std::string>& ref,
                 const std::vector<std::string>& candidates, bool ttr, std::ostream& out) {
    auto config = flags.resolve();
    config.session.rerank.ttr_enabled = ttr;
    auto engine = build_engine(config);
    std::optional<std::vector<std::string>> scope;
    if (!candidates.empty()) scope = candidates;
    const auto turn = engine->run_turn({}, {query, ref}, scope, config.session);
    out << "rank\tproduct_id\trm_raw\trm_ttr\tbest_sid\n";
    for (const auto& r : turn.results) {
        out << r.rank << '\t' << r.product_id << '\t' << fixed6(r.rm_raw) << '\t' << fixed6(r.rm_ttr) << '\t'
            << r.best_sid.text << '\n';
    }
    return kExitOk;
}

struct EvalArgs {
    std::string dataset, report, csv;
    bool ttr = false;
    std::uint64_t seed = 0;
    std::size_t candidates = 100;
    std::optional<std::size_t> turns;
};

int cmd_eval(const EngineFlags& flags, const EvalArgs& args, std::ostream& out) {
    auto config = flags.resolve();
    auto engine = build_engine(config);
    std::ifstream in(args.dataset);
    if (!in) throw Error(ErrorCode::IoError, "cannot open dataset '" + args.dataset + "'");
    const auto dataset = parse_dataset(in);
    EvalOptions options;
    options.seed = args.seed;
    options.num_candidates = args.candidates;
    options.modes = args.ttr ? TtrModes::Both : TtrModes::Off;
    options.uniform_length = args.turns;
    options.parallelism = config.session.rerank.parallelism;
    options.config_digest = config.digest();
    const auto report = run_eval(dataset, engine->corpus(), engine_runner(*engine, config.session), options);
    write_file_atomic(args.report, report.serialize());
    if (!args.csv.empty()) write_file_atomic(args.csv, report.per_turn_csv());
    for (const auto& [mode, m] : report.final_turn) {
        out << mode << "\tmrr=" << fixed6(m.mrr) << "\tndcg@1=" << fixed6(m.ndcg1) << "\tndcg@5=" << fixed6(m.ndcg5)
            << "\tndcg@10=" << fixed6(m.ndcg10) << "\n";
    }
    out << "digest\t" << report.digest() << "\n";
    return kExitOk;
}

int cmd_synth(const SynthParams& params, const std::string& out_dir, std::ostream& out) {
    const auto files = synth_generate(params);
    std::filesystem::create_directories(out_dir);
    write_file_atomic(std::filesystem::path(out_dir) / "corpus.jsonl", files.corpus_jsonl);
    write_file_atomic(std::filesystem::path(out_dir) / "dialogues.jsonl", files.dialogues_jsonl);
    out << "wrote " << params.num_products << " products and " << params.num_dialogues << " dialogues to " << out_dir
        << "\n";
    return kExitOk;
}

httplib::Server* g_server = nullptr;

extern "C" void stop_server(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const EngineFlags& flags, const std::optional<std::string>& host, const std::optional<int>& port) {
    auto config = flags.resolve();
    if (host) config.host = *host;
    if (port) config.port = *port;
    auto engine = build_engine(config);
    std::optional<std::filesystem::path> snapshots;
    if (!config.snapshot_dir.empty()) snapshots = config.snapshot_dir;
    auto store = std::make_shared<SessionStore>(engine, snapshots);
    Service service(store);
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    spdlog::info("serving {} products on {}:{}", engine->corpus().size(), config.host, config.port);
    const bool ok = server.listen(config.host, config.port);
    g_server = nullptr;
    if (!ok) throw Error(ErrorCode::IoError, "cannot listen on " + config.host + ":" + std::to_string(config.port));
    return kExitOk;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::RemoteUnavailable:
        case ErrorCode::EvaluatorUnavailable:
            return kExitRemote;
        default:
            return kExitData;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conversational product search over semantic IDs", "cpsearch"};
    app.require_subcommand(1);

    // index build
    auto* index = app.add_subcommand("index", "index management");
    index->require_subcommand(1);
    auto* index_build = index->add_subcommand("build", "build vocabulary and FM-index files");
    std::string corpus_path, out_dir;
    index_build->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    index_build->add_option("--out", out_dir, "output directory")->required();

    // retrieve
    auto* retrieve = app.add_subcommand("retrieve", "rank products for one query");
    EngineFlags retrieve_flags;
    retrieve_flags.add_to(*retrieve);
    std::string query;
    std::optional<std::string> ref;
    std::vector<std::string> candidates;
    bool retrieve_ttr = false;
    retrieve->add_option("--query", query, "query text")->required();
    retrieve->add_option("--ref", ref, "referenced product id");
    retrieve->add_option("--candidates", candidates, "restrict to these product ids")->delimiter(',');
    retrieve->add_flag("--ttr", retrieve_ttr, "apply test-time reranking");

    // eval run
    auto* eval = app.add_subcommand("eval", "evaluation");
    eval->require_subcommand(1);
    auto* eval_run = eval->add_subcommand("run", "replay a dialogue dataset and write a report");
    EngineFlags eval_flags;
    eval_flags.add_to(*eval_run);
    EvalArgs eval_args;
    eval_run->add_option("--dataset", eval_args.dataset, "dialogue JSONL")->required();
    eval_run->add_option("--report", eval_args.report, "report JSON path")->required();
    eval_run->add_option("--csv", eval_args.csv, "per-turn table as CSV");
    eval_run->add_flag("--ttr", eval_args.ttr, "add the TTR column next to the raw one");
    eval_run->add_option("--seed", eval_args.seed, "candidate sampling seed");
    eval_run->add_option("--candidates", eval_args.candidates, "candidate set size")->check(CLI::PositiveNumber);
    eval_run->add_option("--turns", eval_args.turns, "dialogue length for the per-turn table");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and dialogues");
    SynthParams synth_params;
    std::string synth_out;
    synth->add_option("--seed", synth_params.seed)->required();
    synth->add_option("--products", synth_params.num_products);
    synth->add_option("--dialogues", synth_params.num_dialogues);
    synth->add_option("--turns", synth_params.turns_per_dialogue);
    synth->add_option("--ref-probability", synth_params.ref_probability)->check(CLI::Range(0.0, 1.0));
    synth->add_option("--out", synth_out, "output directory")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    EngineFlags serve_flags;
    serve_flags.add_to(*serve);
    std::optional<std::string> host;
    std::optional<int> port;
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*index_build) return cmd_index_build(corpus_path, out_dir, out);
        if (*retrieve) return cmd_retrieve(retrieve_flags, query, ref, candidates, retrieve_ttr, out);
        if (*eval_run) return cmd_eval(eval_flags, eval_args, out);
        if (*synth) return cmd_synth(synth_params, synth_out, out);
        if (*serve) return cmd_serve(serve_flags, host, port);
    } catch (const Error& e) {
        err << "error: " << to_string(e.code());
        if (e.line()) err << " at line " << *e.line();
        err << ": " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace cps
