#include "cps/synth.hpp"

#include <array>
#include <cstdio>
#include <set>
#include <vector>

#include <json.hpp>

#include "cps/error.hpp"
#include "cps/eval.hpp"
#include "cps/rng.hpp"

namespace cps {

namespace {

using nlohmann::json;

const std::vector<std::string> kCategories = {"dress",  "skirt",  "blouse", "jacket", "coat",     "sweater",
                                              "shirt",  "jeans",  "boots",  "sandals", "sneakers", "scarf"};
const std::vector<std::string> kColors = {"red",   "blue",  "green", "black", "white",  "beige",
                                          "navy",  "pink",  "olive", "grey",  "yellow", "burgundy"};
const std::vector<std::string> kStyles = {"casual", "formal",  "vintage", "bohemian",
                                          "sporty", "minimal", "preppy",  "oversized"};
const std::vector<std::string> kFabrics = {"cotton", "silk", "linen", "wool", "denim", "leather", "velvet", "satin"};

const std::vector<std::string> kOccasions = {"weekend trips", "the office", "evening events", "everyday wear",
                                             "summer holidays", "cold mornings"};
const std::vector<std::string> kFinishes = {"soft", "structured", "relaxed", "tailored", "lightweight", "durable"};

struct Item {
    std::string id;
    std::string category, color, style, fabric;
};

std::string a(const std::string& phrase, const std::string& category) {
    static const std::set<std::string> plural = {"jeans", "boots", "sandals", "sneakers"};
    return (plural.count(category) ? "some " : "a ") + phrase;
}

std::string product_id(std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "prod-%05zu", i + 1);
    return buf;
}

std::string reveal(const Item& item, std::size_t attribute, SeededRng& rng) {
    switch (attribute) {
        case 0: {
            static const std::vector<std::string> t = {"i am looking for ", "show me ", "i need "};
            return rng.pick(t) + a(item.category, item.category);
        }
        case 1: {
            static const std::vector<std::string> t = {"preferably in ", "do you have it in ", "the color should be "};
            return rng.pick(t) + item.color;
        }
        case 2: {
            static const std::vector<std::string> t = {"something more ", "i like a ", "make it "};
            const auto& lead = rng.pick(t);
            return lead + item.style + (rng.chance(0.5) ? " style" : "");
        }
        default: {
            static const std::vector<std::string> t = {"made of ", "ideally in ", "the fabric should be "};
            return rng.pick(t) + item.fabric;
        }
    }
}

}  // namespace

SynthOutput synth_generate(const SynthParams& p) {
    if (p.num_products < 100) {
        throw Error(ErrorCode::InvalidParameters, "synthetic corpus needs at least 100 products");
    }
    if (p.num_dialogues == 0 || p.turns_per_dialogue == 0) {
        throw Error(ErrorCode::InvalidParameters, "need at least one dialogue and one turn");
    }
    const std::size_t combos = kCategories.size() * kColors.size() * kStyles.size() * kFabrics.size();
    if (p.num_products > combos) {
        throw Error(ErrorCode::InvalidParameters, "at most " + std::to_string(combos) + " distinct products");
    }
    SeededRng rng(p.seed);

    // Distinct attribute combinations.
    std::set<std::size_t> used;
    std::vector<Item> items;
    SynthOutput out;
    while (items.size() < p.num_products) {
        const std::size_t c = rng.below(combos);
        if (!used.insert(c).second) continue;
        std::size_t r = c;
        Item item;
        item.id = product_id(items.size());
        item.category = kCategories[r % kCategories.size()];
        r /= kCategories.size();
        item.color = kColors[r % kColors.size()];
        r /= kColors.size();
        item.style = kStyles[r % kStyles.size()];
        r /= kStyles.size();
        item.fabric = kFabrics[r];

        // One draw per statement: operand evaluation order is unspecified.
        const auto& finish = rng.pick(kFinishes);
        const auto& occasion = rng.pick(kOccasions);
        const auto& pair_color = rng.pick(kColors);
        const auto& pair_category = rng.pick(kCategories);
        json record = {
            {"product_id", item.id},
            {"caption", "a " + item.color + " " + item.fabric + " " + item.category + " with a " + item.style + " look"},
            {"description", "A " + finish + " " + item.category + " cut from " + item.fabric + ". Great for " +
                                occasion + ". Pairs well with " + a(pair_color + " " + pair_category, pair_category) +
                                "."},
            {"attributes", {{"category", item.category}, {"color", item.color}, {"style", item.style},
                            {"fabric", item.fabric}}},
            {"image_ref", "img/" + item.id + ".jpg"}};
        out.corpus_jsonl += record.dump() + "\n";
        items.push_back(std::move(item));
    }

    std::vector<EvalDialogue> dialogues;
    const std::size_t turns = p.turns_per_dialogue;
    for (std::size_t d = 0; d < p.num_dialogues; ++d) {
        const Item& target = items[rng.below(items.size())];
        std::array<std::size_t, 4> order = {0, 1, 2, 3};
        rng.shuffle(order.begin() + 1, order.end());  // category comes first
        EvalDialogue dialogue;
        char id[24];
        std::snprintf(id, sizeof id, "dlg-%05zu", d + 1);
        dialogue.dialogue_id = id;
        for (std::size_t t = 0; t < turns; ++t) {
            // Attributes spread over the turns; leftovers land on the last.
            std::string text;
            for (std::size_t a = 0; a < order.size(); ++a) {
                const std::size_t due = std::min(a, turns - 1);
                if (due != t) continue;
                if (!text.empty()) text += " and ";
                text += reveal(target, order[a], rng);
            }
            if (text.empty()) text = "show me a few more options";
            EvalTurn turn{text, std::nullopt, target.id, std::nullopt};
            if (t > 0 && rng.chance(p.ref_probability)) {
                std::vector<const Item*> similar;
                for (const auto& it : items) {
                    if (it.category == target.category && it.id != target.id) similar.push_back(&it);
                }
                if (!similar.empty()) {
                    turn.ref_product_id = similar[rng.below(similar.size())]->id;
                    turn.user_text = "something like this one but " + turn.user_text;
                }
            }
            dialogue.turns.push_back(std::move(turn));
        }
        dialogues.push_back(std::move(dialogue));
    }
    out.dialogues_jsonl = serialize_dataset(dialogues);
    return out;
}

}  // namespace cps
