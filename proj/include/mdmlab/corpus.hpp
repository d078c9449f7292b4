#pragma once

// Synthetic "keyed pair recall" corpus. A prompt carries shuffled
// (TAG_i, a-token) groups; the answer replays, slot by slot in fixed order,
// the a-token for each tag followed by its partner b-token under a fixed
// per-family bijection, then EOS and PAD fill. The anchor is a one-hop
// recall from the prompt while the partner is one-hop only once its
// neighbour is visible, so independent parallel guesses can pair tokens
// across families — the failure mode the decoder experiments probe.

#include <mdmlab/model.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdmlab {

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TokenLayout {
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kMask = 1;
    static constexpr int32_t kEos = 2;
    static constexpr int32_t kBos = 3;
    static constexpr int32_t kSep = 4;
    static constexpr int32_t kTagBase = 5;

    int num_tags = 0;
    int num_families = 0;

    int32_t tag(int slot) const { return kTagBase + slot; }
    int32_t a_token(int family) const { return kTagBase + num_tags + family; }
    int32_t b_token(int family) const { return kTagBase + num_tags + num_families + family; }
    int vocab_size() const { return kTagBase + num_tags + 2 * num_families; }

    bool is_a(int32_t tok) const {
        return tok >= kTagBase + num_tags && tok < kTagBase + num_tags + num_families;
    }
    bool is_b(int32_t tok) const {
        return tok >= kTagBase + num_tags + num_families && tok < vocab_size();
    }
    int family_of_a(int32_t tok) const { return tok - kTagBase - num_tags; }
    int family_of_b(int32_t tok) const { return tok - kTagBase - num_tags - num_families; }
    // the partner bijection: b completing a's family
    int32_t partner(int32_t a) const { return b_token(family_of_a(a)); }
};

struct CorpusSpec {
    int num_tag_slots = 4;
    int num_pair_families = 12;
    int answer_len = 16;
    int corpus_size = 8192;
    double heldout_fraction = 0.0625;
    uint64_t seed = 0;

    TokenLayout layout() const { return TokenLayout{num_tag_slots, num_pair_families}; }
    int prompt_len() const { return 2 + 2 * num_tag_slots; }  // BOS, (tag,a)*, SEP
    void validate() const;
    // every legal (a, b) pair
    std::vector<std::pair<int32_t, int32_t>> legal_pairs() const;
};

struct Example {
    std::vector<int32_t> prompt;
    std::vector<int32_t> answer;
};

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> heldout;
};

Dataset generate_corpus(const CorpusSpec& spec);

// strict legality of a corpus sequence (grammar, recall consistency, pairs)
bool validate_sequence(const CorpusSpec& spec, const Example& ex, std::string* why = nullptr);

// pair audit of a decoded answer region
struct PairAudit {
    int slots = 0;      // expected pair slots
    int checkable = 0;  // both positions hold family tokens
    int legal = 0;      // checkable and partner-consistent
    int violations() const { return slots - legal; }
    double violation_rate() const { return slots ? double(slots - legal) / double(slots) : 0.0; }
};

PairAudit audit_pairs(const CorpusSpec& spec, std::span<const int32_t> answer);

// fixed printable mapping for the toy vocabulary
std::string detokenize(const TokenLayout& layout, std::span<const int32_t> tokens);

// newline-delimited {"prompt": [...], "answer": [...]} records
void write_dataset_jsonl(const std::string& path, std::span<const Example> examples);
std::vector<Example> read_dataset_jsonl(const std::string& path);

// model config sized for this corpus
ModelConfig default_model_config(const CorpusSpec& spec);

}  // namespace mdmlab
