#pragma once

#include <cstdint>
#include <string>

namespace cps {

struct SynthParams {
    std::uint64_t seed = 0;
    std::size_t num_products = 500;
    std::size_t num_dialogues = 100;
    std::size_t turns_per_dialogue = 4;
    // Chance that a later turn points at a product sharing the target's
    // category.
    double ref_probability = 0.3;
};

struct SynthOutput {
    std::string corpus_jsonl;
    std::string dialogues_jsonl;
};

/// Products built from category/color/style/fabric vocabularies with
/// templated captions and descriptions, plus dialogues that reveal the
/// target's attributes one turn at a time. Every target caption names all
/// four attributes, so it shares at least two tokens with the final
/// inferred query. Byte-identical output per params. Throws
/// InvalidParameters for fewer than 100 products, no dialogues or no turns.
SynthOutput synth_generate(const SynthParams& params);

}  // namespace cps
