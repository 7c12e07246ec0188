#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tksg/corpus.hpp"

namespace tksg {

struct SyntheticTopic {
    std::string name;
    std::size_t label_index = 0;           // position within the 14-label schema
    std::vector<std::string> templates;    // literal sentences, each containing >=1 keyword
    std::vector<std::string> keywords;     // signature phrases, unique to this topic
};

// Recipe for a planted-structure corpus: reports are built from per-topic
// templates, paired feature tensors carry per-topic block signals, and
// retrieval embeddings cluster by topic set.
struct SyntheticSpec {
    std::vector<SyntheticTopic> topics;
    std::size_t train_samples = 500;
    std::size_t val_samples = 100;
    std::size_t test_samples = 100;
    std::vector<std::string> fillers;
    double noise_rate = 0.1;
    std::uint64_t seed = 1234;
    std::size_t min_topics = 1;
    std::size_t max_topics = 3;
    std::size_t n_patches = 16;
    std::size_t feature_dim = 64;   // must match the model's d_h for the precomputed path
    std::size_t embed_dim = 32;
    double signal_scale = 1.0;
    double feature_noise = 0.5;
    double embed_noise = 0.25;
};

SyntheticSpec default_synthetic_spec();
SyntheticSpec load_synthetic_spec(const std::string& path);
void save_synthetic_spec(const std::string& path, const SyntheticSpec& spec);

// Throws on inconsistent specs: empty keyword sets, signatures leaking into
// other topics' templates or the filler list, templates without their own
// signature, bad label indices or noise rate.
void validate_spec(const SyntheticSpec& spec);

struct SyntheticOutput {
    Corpus corpus;
    std::string corpus_path;
    std::string index_path;       // train-split report embeddings
    std::string index_ids_path;
    std::string queries_path;     // per-sample query embeddings, all splits
    std::string queries_ids_path;
    std::string spec_path;        // resolved spec echoed back for labeling
};

// Deterministic given (spec, seed): corpus JSONL, one feature tensor per
// sample, retrieval index embeddings, query embeddings, reference files.
SyntheticOutput generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::string& out_dir);

// Topic i is set iff any of topic i's signature phrases occurs contiguously
// in the report tokens.
std::array<std::uint8_t, kTopicCount> rule_label(const std::vector<std::string>& report_tokens,
                                                 const SyntheticSpec& spec);

}  // namespace tksg
