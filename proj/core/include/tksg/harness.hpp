#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tksg/config.hpp"
#include "tksg/corpus.hpp"
#include "tksg/metrics.hpp"
#include "tksg/model.hpp"
#include "tksg/retrieval_index.hpp"
#include "tksg/synthetic.hpp"
#include "tksg/text.hpp"

namespace tksg {

// One corpus entry resolved for training/decoding: loaded feature or image
// tensor, encoded report, concept labels, cached retrieval context.
struct LoadedSample {
    const SampleRecord* rec = nullptr;
    Tensor<float> visual_file;           // 2-d features or 3-d image, as stored
    std::vector<std::size_t> gold_ids;   // report tokens, no BOS/EOS
    std::vector<std::uint8_t> concepts;  // multi-hot over N_W
    Tensor<float> retrieval_raw;         // [n_ret x d_e]; invalid when unused
};

// Everything a run needs in memory. Index/queries stay empty for variants
// without keyword guidance.
struct Dataset {
    Corpus corpus;
    Vocabulary vocab;
    ConceptVocabulary concept_vocab;
    std::optional<RetrievalIndex> index;
    std::size_t d_e = 0;
    std::vector<LoadedSample> train, val, test;

    const std::vector<LoadedSample>& split(const std::string& name) const;
};

Dataset load_dataset(const RunConfig& run);

// Visual features for one sample: precomputed tensors pass through, images go
// through the encoder.
Tensor<float> sample_visual(const TksgModel<float>& model, const LoadedSample& sample,
                            float drop = 0.0f, std::mt19937_64* rng = nullptr);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_all = 0, train_rep = 0, train_kd = 0, train_td = 0;
    double val_rep = 0;
    double lr_encoder = 0, lr_rest = 0;
};

struct TrainResult {
    std::string run_dir;
    std::string best_dir;   // best-by-val-L_rep checkpoint
    std::string last_dir;   // resumable state
    std::string log_path;
    std::vector<EpochRecord> log;
    double best_val_rep = 0;
    std::size_t epochs_run = 0;
};

// Full training loop: seeded shuffling, teacher forcing, L_all backward, two
// Adam groups with per-epoch lr decay, best-by-validation checkpointing and
// early stopping. `resume` continues from the run directory's last/ state.
TrainResult cmd_train(const RunConfig& run, bool resume = false);

struct GenerateResult {
    std::string out_path;
    std::size_t count = 0;
    std::vector<std::pair<std::string, std::string>> lines;  // (id, detokenized report)
};

GenerateResult cmd_generate(const RunConfig& run, const std::string& checkpoint_dir,
                            const std::string& split, const std::string& out_path);

struct EvaluateInputs {
    std::string candidates_path;
    std::string references_path;
    std::string synth_spec_path;  // rule-based labeler for CE; optional
    std::string pred_labels_path; // explicit label files for real data; optional
    std::string gold_labels_path;
};

MetricReport cmd_evaluate(const EvaluateInputs& in);

struct RetrieveRow {
    std::string query_id;
    std::size_t rank = 0;
    std::string id;
    double similarity = 0.0;
};

std::vector<RetrieveRow> cmd_retrieve(const std::string& index_path, const std::string& ids_path,
                                      const std::string& queries_path,
                                      const std::string& query_ids_path, std::size_t k,
                                      bool exclude_self);

struct SweepCell {
    std::size_t n_r = 0, n_k = 0;
    bool ok = false;
    std::string error;
    MetricReport metrics;
    std::string run_dir;
    bool best = false;
};

std::vector<SweepCell> cmd_sweep(const RunConfig& base, const std::vector<std::size_t>& nr_grid,
                                 const std::vector<std::size_t>& nk_grid,
                                 const std::string& out_tsv);

// id<TAB>text lines, UTF-8
std::vector<std::pair<std::string, std::string>> read_report_file(const std::string& path);
void write_report_file(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& lines);

// id<TAB>comma-separated 14 bits
std::vector<std::pair<std::string, std::array<std::uint8_t, kTopicCount>>> read_label_file(
    const std::string& path);
void write_label_file(
    const std::string& path,
    const std::vector<std::pair<std::string, std::array<std::uint8_t, kTopicCount>>>& labels);

}  // namespace tksg
