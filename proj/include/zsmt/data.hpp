#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "zsmt/rng.hpp"

namespace zsmt {

// ---- vocabulary -------------------------------------------------------

// Token/ID mapping with reserved specials. IDs are dense and stable: tokens
// can only be appended, never reordered, so an expanded vocabulary is a
// prefix-preserving superset of the original.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kEos = 2;

  Vocabulary() = default;

  // Specials plus one BOS per language, then surface tokens in sorted order.
  static Vocabulary build(int num_languages, const std::vector<std::string>& surface_tokens);

  // Appends unseen tokens (and BOS markers for added languages) at the end.
  void extend(int num_languages, const std::vector<std::string>& surface_tokens);

  int32_t id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int32_t id) const;
  int32_t bos_id(int lang) const;
  bool is_special(int32_t id) const;

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  int num_languages() const { return num_languages_; }

  static std::string bos_token(int lang);
  static std::string lang_name(int lang);

  // One token per line; line number == ID.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  uint64_t content_hash() const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  int32_t add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> ids_;
  int num_languages_ = 0;
};

// ---- corpus -------------------------------------------------------------

enum class Split { Train, Dev, Test };

struct SentencePair {
  int src_lang = 0;
  int tgt_lang = 0;
  std::vector<int32_t> src;
  std::vector<int32_t> tgt;
  Split split = Split::Train;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::string split_tag;      // "train" | "dev" | "test" | "all"
  std::string direction_tag;  // "supervised" | "zero-shot" | "mixed"
};

struct CorpusSplits {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test_supervised;
  ParallelCorpus test_zero_shot;
};

// ---- synthetic task -------------------------------------------------------

struct ReorderRule {
  enum class Kind { Identity, Reverse, Rotate, SwapAdjacent, InterleaveHalves };
  Kind kind = Kind::Identity;
  int k = 1;  // rotation amount

  // Deterministic bijection on positions: out[i] = in[apply(i, n)].
  std::vector<int> permutation(int n) const;
  std::vector<int> inverse_permutation(int n) const;
  std::string name() const;
  static ReorderRule parse(const std::string& name);
};

struct SyntheticTaskSpec {
  int num_languages = 4;
  int pivot_language = 0;
  int concept_vocab_size = 600;
  int min_len = 4;
  int max_len = 12;
  double lexical_overlap = 0.0;  // fraction of concepts sharing surface forms
  bool multiway = true;
  int sentences_per_direction = 5000;
  int dev_size = 200;
  int test_size = 200;
  double zipf_exponent = 1.1;
  uint64_t seed = 1;
  std::vector<ReorderRule> reorder;  // per language; filled by validate()

  void validate();  // assigns default reordering rules, checks invariants
};

// Aligned multiway sentences: by_lang[lang][i] is sentence i rendered in
// `lang`. Needed by the SVCCA analysis and the oracle checks.
struct MultiwaySentences {
  std::vector<std::vector<std::vector<int32_t>>> by_lang;
  int num_sentences() const {
    return by_lang.empty() ? 0 : static_cast<int>(by_lang[0].size());
  }
};

struct GeneratedData {
  SyntheticTaskSpec spec;
  Vocabulary vocab;
  ParallelCorpus all;  // covers every ordered pair in dev/test; supervised train
  MultiwaySentences dev_multiway;
  MultiwaySentences test_multiway;
  bool tagged = false;
};

GeneratedData generate_synthetic_corpus(const SyntheticTaskSpec& spec);

// Exact translation by construction: invert the source language's reordering
// and lexicon, then apply the target's. The brute-force reference the model
// is graded against.
std::vector<int32_t> oracle_translate(const SyntheticTaskSpec& spec, const Vocabulary& vocab,
                                      const std::vector<int32_t>& src, int src_lang, int tgt_lang,
                                      bool tagged = false);

std::string surface_token(const SyntheticTaskSpec& spec, int lang, int concept);

// Per-language sets of surface token IDs, for off-target classification.
std::vector<std::unordered_set<int32_t>> build_language_lexicons(const SyntheticTaskSpec& spec,
                                                                 const Vocabulary& vocab,
                                                                 bool tagged);

// ---- data-condition constructions ----------------------------------------

struct SplitOptions {
  bool dev_include_zero_shot = false;
};

CorpusSplits build_english_centered_splits(const ParallelCorpus& corpus, int pivot_id,
                                           const SplitOptions& opts = {});

// Prefixes every surface token with its side's language tag, guaranteeing
// zero cross-language lexical overlap; rebuilds the vocabulary.
GeneratedData apply_no_overlap_tagging(const GeneratedData& data);
std::string tag_token(int lang, const std::string& token);
std::string strip_token_tag(const std::string& token);

ParallelCorpus subsample_direction(const ParallelCorpus& corpus, double fraction, uint64_t seed);
ParallelCorpus subsample_direction(const ParallelCorpus& corpus, int64_t count, uint64_t seed);

// ---- batching -------------------------------------------------------------

struct Batch {
  int size = 0;     // sentences
  int src_len = 0;  // padded source width
  int tgt_len = 0;  // padded target width (includes the EOS step)
  std::vector<int32_t> src;      // [size * src_len], EOS-terminated, PAD-filled
  std::vector<int> src_lens;     // tokens + EOS
  std::vector<int32_t> tgt_in;   // [size * tgt_len], row = BOS y1..yT PAD..
  std::vector<int32_t> tgt_out;  // [size * tgt_len], row = y1..yT EOS PAD..
  std::vector<int> tgt_lens;     // tokens + EOS step
  std::vector<int> tgt_langs;
  int64_t target_tokens() const {
    int64_t s = 0;
    for (int t : tgt_lens) s += t;
    return s;
  }
};

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocabulary& vocab,
                                int batch_size_tokens, uint64_t seed, int max_positions);

// Single direction, order-preserving; for decoding/eval.
Batch make_eval_batch(const std::vector<const SentencePair*>& pairs, const Vocabulary& vocab,
                      int max_positions);

// ---- plain-text interchange ----------------------------------------------

ParallelCorpus load_tsv_corpus(const std::string& path, int src_lang, int tgt_lang,
                               const Vocabulary& vocab);
void write_tsv_corpus(const ParallelCorpus& corpus, const Vocabulary& vocab,
                      const std::string& path);
// One file per (src,tgt,split): {src}-{tgt}.{split}.tsv under dir.
std::vector<std::string> write_corpus_files(const ParallelCorpus& corpus, const Vocabulary& vocab,
                                            const std::string& dir);
void write_multiway_tsv(const MultiwaySentences& mw, const Vocabulary& vocab,
                        const std::string& path);
MultiwaySentences load_multiway_tsv(const std::string& path, const Vocabulary& vocab);

}  // namespace zsmt
