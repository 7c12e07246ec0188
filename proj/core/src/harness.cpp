#include "tksg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "tksg/adam.hpp"
#include "tksg/rng.hpp"
#include "tksg/tensor_io.hpp"

namespace tksg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve_ref(const std::string& corpus_path, const std::string& ref) {
    fs::path p(ref);
    if (p.is_absolute()) return ref;
    return (fs::path(corpus_path).parent_path() / p).string();
}

std::uint64_t tokens_hash(const std::vector<std::string>& tokens) {
    std::string joined;
    for (const auto& t : tokens) {
        joined += t;
        joined += '\n';
    }
    return hash_str(joined);
}

struct QueryTable {
    TensorFile tensor;
    std::map<std::string, std::size_t> row_of;

    const float* row(const std::string& id) const {
        auto it = row_of.find(id);
        if (it == row_of.end())
            throw std::runtime_error("queries: no embedding for sample id '" + id + "'");
        return tensor.values.data() + it->second * tensor.shape[1];
    }
};

QueryTable load_queries(const std::string& tensor_path, const std::string& ids_path) {
    QueryTable q;
    q.tensor = load_tensor(tensor_path);
    if (q.tensor.shape.size() != 2)
        throw std::runtime_error("queries: expected a 2-d tensor in " + tensor_path);
    std::ifstream in(ids_path);
    if (!in) throw std::runtime_error("queries: cannot open " + ids_path);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line))
        if (!line.empty()) q.row_of[line] = row++;
    if (row != q.tensor.shape[0])
        throw std::runtime_error("queries: id count does not match tensor rows in " + ids_path);
    return q;
}

LoadedSample load_one(const SampleRecord& rec, const RunConfig& run, const Vocabulary& vocab,
                      const ConceptVocabulary* concepts, const RetrievalIndex* index,
                      const QueryTable* queries, bool* short_index_warned) {
    LoadedSample s;
    s.rec = &rec;
    s.visual_file = load_tensor_as<float>(resolve_ref(run.corpus, rec.image_ref));
    if (s.visual_file.rank() == 2 && s.visual_file.dim(1) != run.d_h)
        throw std::runtime_error("sample '" + rec.id + "': feature width " +
                                 std::to_string(s.visual_file.dim(1)) + " does not match d_h=" +
                                 std::to_string(run.d_h));
    if (s.visual_file.rank() != 2 && s.visual_file.rank() != 3)
        throw std::runtime_error("sample '" + rec.id + "': expected 2-d features or 3-d image");

    const auto tokens = tokenize(rec.report);
    s.gold_ids = vocab.encode(tokens);
    if (concepts) s.concepts = label_keywords(tokens, *concepts);

    if (index) {
        const auto hits = index->query_topk(queries->row(rec.id), queries->tensor.shape[1], run.n_r,
                                            run.exclude_self ? rec.id : std::string());
        if (hits.size() < run.n_r && !*short_index_warned) {
            std::cerr << "warning: index holds only " << hits.size()
                      << " candidates; retrieved sets are shorter than n_r=" << run.n_r << "\n";
            *short_index_warned = true;
        }
        std::vector<float> raw(hits.size() * index->dim());
        for (std::size_t i = 0; i < hits.size(); ++i)
            std::copy(index->row(hits[i].row), index->row(hits[i].row) + index->dim(),
                      raw.begin() + i * index->dim());
        s.retrieval_raw = Tensor<float>::from({hits.size(), index->dim()}, std::move(raw));
    }
    return s;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void write_meta(const std::string& dir, const RunConfig& run, const Dataset& data,
                std::size_t epoch, double val_rep) {
    json j;
    j["config"] = json::parse(run.to_json());
    j["vocab_size"] = data.vocab.size();
    j["vocab_hash"] = tokens_hash(data.vocab.tokens());
    j["concepts_hash"] = data.concept_vocab.size() ? tokens_hash(data.concept_vocab.tokens) : 0;
    j["d_e"] = data.d_e;
    j["epoch"] = epoch;
    j["val_rep"] = val_rep;
    std::ofstream out(fs::path(dir) / "meta.json", std::ios::trunc);
    out << j.dump(2) << '\n';
}

void check_meta(const std::string& dir, const RunConfig& run, const Dataset& data) {
    std::ifstream in(fs::path(dir) / "meta.json");
    if (!in) throw std::runtime_error("checkpoint: missing meta.json in " + dir);
    json j;
    in >> j;
    std::vector<std::string> problems;
    if (j.at("vocab_size").get<std::size_t>() != data.vocab.size())
        problems.push_back("vocabulary size");
    if (j.at("vocab_hash").get<std::uint64_t>() != tokens_hash(data.vocab.tokens()))
        problems.push_back("vocabulary content");
    const std::uint64_t chash =
        data.concept_vocab.size() ? tokens_hash(data.concept_vocab.tokens) : 0;
    if (j.at("concepts_hash").get<std::uint64_t>() != chash) problems.push_back("concept vocabulary");
    if (j.at("d_e").get<std::size_t>() != data.d_e) problems.push_back("retrieval dimension");
    const auto cj = j.at("config");
    auto mismatch = [&](const char* key, auto current) {
        if (cj.contains(key) && cj.at(key).get<std::decay_t<decltype(current)>>() != current)
            problems.push_back(std::string("config field ") + key);
    };
    mismatch("d_h", run.d_h);
    mismatch("d_b", run.d_b);
    mismatch("enc_layers", run.enc_layers);
    mismatch("dec_layers", run.dec_layers);
    mismatch("n_heads", run.n_heads);
    mismatch("t_max", run.t_max);
    mismatch("n_w", run.n_w);
    mismatch("n_k", run.n_k);
    mismatch("variant", run.variant);
    mismatch("sg_layers", run.sg_layers);
    if (!problems.empty()) {
        std::string msg = "checkpoint/configuration mismatch in " + dir + ":";
        for (const auto& p : problems) msg += " " + p + ";";
        throw std::runtime_error(msg);
    }
}

void save_adam_state(const std::string& dir, const ParamSet<float>& params,
                     AdamState<float>& enc, AdamState<float>& rest,
                     const std::vector<bool>& is_encoder, const json& extra) {
    std::size_t ei = 0, ri = 0;
    for (std::size_t i = 0; i < params.items().size(); ++i) {
        const auto& [name, t] = params.items()[i];
        AdamState<float>& opt = is_encoder[i] ? enc : rest;
        const std::size_t slot = is_encoder[i] ? ei++ : ri++;
        const fs::path base = fs::path(dir) / "adam" / name;
        fs::create_directories(base.parent_path());
        save_tensor(base.string() + ".m.bin", t.shape(), opt.moment1(slot));
        save_tensor(base.string() + ".v.bin", t.shape(), opt.moment2(slot));
    }
    json j = extra;
    j["enc_steps"] = enc.step_count();
    j["rest_steps"] = rest.step_count();
    j["lr_encoder"] = enc.config().lr;
    j["lr_rest"] = rest.config().lr;
    std::ofstream out(fs::path(dir) / "state.json", std::ios::trunc);
    out << j.dump(2) << '\n';
}

json load_adam_state(const std::string& dir, const ParamSet<float>& params,
                     AdamState<float>& enc, AdamState<float>& rest,
                     const std::vector<bool>& is_encoder) {
    std::size_t ei = 0, ri = 0;
    for (std::size_t i = 0; i < params.items().size(); ++i) {
        const auto& [name, t] = params.items()[i];
        AdamState<float>& opt = is_encoder[i] ? enc : rest;
        const std::size_t slot = is_encoder[i] ? ei++ : ri++;
        const fs::path base = fs::path(dir) / "adam" / name;
        auto m = load_tensor(base.string() + ".m.bin");
        auto v = load_tensor(base.string() + ".v.bin");
        if (m.shape != t.shape() || v.shape != t.shape())
            throw std::runtime_error("resume: adam moment shape mismatch for '" + name + "'");
        opt.moment1(slot).assign(m.values.begin(), m.values.end());
        opt.moment2(slot).assign(v.values.begin(), v.values.end());
    }
    std::ifstream in(fs::path(dir) / "state.json");
    if (!in) throw std::runtime_error("resume: missing state.json in " + dir);
    json j;
    in >> j;
    enc.set_step_count(j.at("enc_steps").get<std::int64_t>());
    rest.set_step_count(j.at("rest_steps").get<std::int64_t>());
    enc.config().lr = j.at("lr_encoder").get<float>();
    rest.config().lr = j.at("lr_rest").get<float>();
    return j;
}

}  // namespace

const std::vector<LoadedSample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

Dataset load_dataset(const RunConfig& run) {
    run.validate();
    if (run.corpus.empty()) throw std::runtime_error("missing artifact: no corpus path configured");
    if (run.vocab.empty()) throw std::runtime_error("missing artifact: no vocabulary path configured");

    Dataset data;
    data.corpus = load_corpus(run.corpus);
    data.vocab = load_vocab(run.vocab);

    const bool keywords = uses_keyword_guidance(run.variant_enum());
    const RetrievalIndex* index_ptr = nullptr;
    QueryTable queries;
    if (keywords) {
        if (run.concepts.empty())
            throw std::runtime_error("missing artifact: keyword guidance needs a concepts file");
        data.concept_vocab = load_concepts(run.concepts);
        if (data.concept_vocab.size() != run.n_w)
            throw std::runtime_error("concepts file holds " +
                                     std::to_string(data.concept_vocab.size()) +
                                     " entries but n_w=" + std::to_string(run.n_w));
        if (run.index.empty() || run.index_ids.empty() || run.queries.empty() ||
            run.queries_ids.empty())
            throw std::runtime_error("missing artifact: keyword guidance needs index and query files");
        data.index = RetrievalIndex::load(run.index, run.index_ids);
        data.d_e = data.index->dim();
        queries = load_queries(run.queries, run.queries_ids);
        if (queries.tensor.shape[1] != data.d_e)
            throw std::runtime_error("query embedding width does not match the index dimension");
        index_ptr = &*data.index;
    }

    bool warned = false;
    for (const auto& rec : data.corpus) {
        auto sample = load_one(rec, run, data.vocab, keywords ? &data.concept_vocab : nullptr,
                               index_ptr, keywords ? &queries : nullptr, &warned);
        if (rec.split == "train") data.train.push_back(std::move(sample));
        else if (rec.split == "val") data.val.push_back(std::move(sample));
        else data.test.push_back(std::move(sample));
    }
    return data;
}

Tensor<float> sample_visual(const TksgModel<float>& model, const LoadedSample& sample, float drop,
                            std::mt19937_64* rng) {
    if (sample.visual_file.rank() == 2) return sample.visual_file;
    return model.encoder().encode(sample.visual_file, model.attention_probe(), drop, rng);
}

TrainResult cmd_train(const RunConfig& run, bool resume) {
    Dataset data = load_dataset(run);
    if (data.train.empty()) throw std::runtime_error("training split is empty");

    const std::string run_dir = run.run_dir();
    fs::create_directories(run_dir);
    run.save(run_dir + "/config.json");

    TksgModel<float> model(ModelConfig::from_run(run, data.vocab.size(), std::max<std::size_t>(data.d_e, 1)),
                           run.seed);

    AdamConfig<float> enc_cfg, rest_cfg;
    enc_cfg.lr = static_cast<float>(run.lr_encoder);
    rest_cfg.lr = static_cast<float>(run.lr_rest);
    AdamState<float> adam_enc(enc_cfg), adam_rest(rest_cfg);
    adam_enc.attach(model.encoder_params());
    adam_rest.attach(model.rest_params());

    std::vector<bool> is_encoder;
    for (const auto& [name, t] : model.params().items())
        is_encoder.push_back(name.rfind("encoder/", 0) == 0);

    const std::string best_dir = run_dir + "/best";
    const std::string last_dir = run_dir + "/last";
    const std::string log_path = run_dir + "/loss.tsv";

    std::size_t start_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t stagnant = 0;

    TrainResult result;
    result.run_dir = run_dir;
    result.best_dir = best_dir;
    result.last_dir = last_dir;
    result.log_path = log_path;

    std::ofstream log;
    if (resume && fs::exists(fs::path(last_dir) / "state.json")) {
        model.load_params(last_dir);
        json st = load_adam_state(last_dir, model.params(), adam_enc, adam_rest, is_encoder);
        start_epoch = st.at("epoch").get<std::size_t>() + 1;
        best_val = st.at("best_val").get<double>();
        stagnant = st.at("stagnant").get<std::size_t>();
        log.open(log_path, std::ios::app);
    } else {
        log.open(log_path, std::ios::trunc);
        log << "epoch\ttrain_all\ttrain_rep\ttrain_kd\ttrain_td\tval_rep\tlr_encoder\tlr_rest\n";
    }

    const Variant variant = run.variant_enum();
    const float drop = static_cast<float>(run.dropout);

    auto eval_val_rep = [&]() {
        std::vector<double> vals;
        for (const auto& s : data.val) {
            auto visual = sample_visual(model, s);
            auto g = model.guide(visual, s.retrieval_raw);
            auto losses = model.losses(visual, g, s.gold_ids, s.rec->topics, s.concepts);
            vals.push_back(losses.report.item());
        }
        return mean_of(vals);
    };

    for (std::size_t epoch = start_epoch; epoch < run.epochs; ++epoch) {
        std::vector<std::size_t> order(data.train.size());
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_rng = make_rng(mix_seed(run.seed, "shuffle"), std::to_string(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        std::vector<double> all_l, rep_l, kd_l, td_l;
        for (std::size_t start = 0; start < order.size(); start += run.batch_size) {
            const std::size_t end = std::min(order.size(), start + run.batch_size);
            adam_enc.zero_grad();
            adam_rest.zero_grad();
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& s = data.train[order[bi]];
                auto drop_rng = make_rng(mix_seed(run.seed, "dropout/" + s.rec->id),
                                         std::to_string(epoch));
                try {
                    auto visual = sample_visual(model, s, drop, &drop_rng);
                    auto g = model.guide(visual, s.retrieval_raw);
                    auto losses =
                        model.losses(visual, g, s.gold_ids, s.rec->topics, s.concepts, drop, &drop_rng);
                    backward(scale(losses.total, 1.0f / static_cast<float>(end - start)));
                    all_l.push_back(losses.total.item());
                    rep_l.push_back(losses.report.item());
                    if (losses.keyword.valid()) kd_l.push_back(losses.keyword.item());
                    if (losses.topic.valid()) td_l.push_back(losses.topic.item());
                } catch (const std::runtime_error& e) {
                    throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                             ", sample '" + s.rec->id + "': " + e.what());
                }
            }
            adam_enc.step();
            adam_rest.step();
        }

        const double val_rep = eval_val_rep();

        EpochRecord recd;
        recd.epoch = epoch;
        recd.train_all = mean_of(all_l);
        recd.train_rep = mean_of(rep_l);
        recd.train_kd = mean_of(kd_l);
        recd.train_td = mean_of(td_l);
        recd.val_rep = val_rep;
        recd.lr_encoder = adam_enc.config().lr;
        recd.lr_rest = adam_rest.config().lr;
        result.log.push_back(recd);

        char line[256];
        std::snprintf(line, sizeof(line), "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6g\t%.6g\n",
                      epoch, recd.train_all, recd.train_rep, recd.train_kd, recd.train_td,
                      recd.val_rep, recd.lr_encoder, recd.lr_rest);
        log << line;
        log.flush();

        if (val_rep < best_val) {
            best_val = val_rep;
            stagnant = 0;
            fs::create_directories(best_dir);
            model.save_params(best_dir);
            write_meta(best_dir, run, data, epoch, val_rep);
        } else {
            ++stagnant;
        }

        // per-epoch lr decay for both groups
        adam_enc.config().lr *= static_cast<float>(run.lr_decay);
        adam_rest.config().lr *= static_cast<float>(run.lr_decay);

        fs::create_directories(last_dir);
        model.save_params(last_dir);
        json extra;
        extra["epoch"] = epoch;
        extra["best_val"] = best_val;
        extra["stagnant"] = stagnant;
        save_adam_state(last_dir, model.params(), adam_enc, adam_rest, is_encoder, extra);
        write_meta(last_dir, run, data, epoch, val_rep);

        result.epochs_run = epoch + 1;
        if (data.val.size() > 0 && stagnant >= run.patience) break;
    }

    // a run with no val improvement at all still exports its final state
    if (!fs::exists(fs::path(best_dir) / "meta.json")) {
        fs::create_directories(best_dir);
        model.save_params(best_dir);
        write_meta(best_dir, run, data, result.epochs_run ? result.epochs_run - 1 : 0, best_val);
    }
    result.best_val_rep = best_val;
    return result;
}

GenerateResult cmd_generate(const RunConfig& run, const std::string& checkpoint_dir,
                            const std::string& split, const std::string& out_path) {
    Dataset data = load_dataset(run);
    check_meta(checkpoint_dir, run, data);

    TksgModel<float> model(ModelConfig::from_run(run, data.vocab.size(), std::max<std::size_t>(data.d_e, 1)),
                           run.seed);
    model.load_params(checkpoint_dir);

    const auto& samples = data.split(split);
    GenerateResult result;
    if (samples.empty())
        std::cerr << "warning: split '" << split << "' is empty; writing an empty report file\n";

    for (const auto& s : samples) {
        auto visual = sample_visual(model, s);
        auto g = model.guide(visual, s.retrieval_raw);
        auto decoded = model.decode(visual, g, run.beam);
        result.lines.emplace_back(s.rec->id, detokenize(data.vocab.decode(decoded.tokens)));
    }
    result.count = result.lines.size();
    result.out_path = out_path;
    if (!out_path.empty()) write_report_file(out_path, result.lines);
    return result;
}

std::vector<std::pair<std::string, std::string>> read_report_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report file " + path);
    std::vector<std::pair<std::string, std::string>> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("report file " + path + ": line without id prefix");
        lines.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return lines;
}

void write_report_file(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& lines) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open report file " + path);
    for (const auto& [id, text] : lines) out << id << '\t' << text << '\n';
}

std::vector<std::pair<std::string, std::array<std::uint8_t, kTopicCount>>> read_label_file(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open label file " + path);
    std::vector<std::pair<std::string, std::array<std::uint8_t, kTopicCount>>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("label file " + path + ": line without id prefix");
        std::array<std::uint8_t, kTopicCount> bits{};
        std::stringstream ss(line.substr(tab + 1));
        std::string item;
        std::size_t i = 0;
        while (std::getline(ss, item, ',')) {
            if (i >= kTopicCount) break;
            bits[i++] = static_cast<std::uint8_t>(std::stoi(item) != 0);
        }
        if (i != kTopicCount)
            throw std::runtime_error("label file " + path + ": expected " +
                                     std::to_string(kTopicCount) + " labels per line");
        out.emplace_back(line.substr(0, tab), bits);
    }
    return out;
}

void write_label_file(
    const std::string& path,
    const std::vector<std::pair<std::string, std::array<std::uint8_t, kTopicCount>>>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open label file " + path);
    for (const auto& [id, bits] : labels) {
        out << id << '\t';
        for (std::size_t i = 0; i < kTopicCount; ++i) out << (i ? "," : "") << int(bits[i]);
        out << '\n';
    }
}

MetricReport cmd_evaluate(const EvaluateInputs& in) {
    auto cand_lines = read_report_file(in.candidates_path);
    auto ref_lines = read_report_file(in.references_path);

    std::map<std::string, std::string> cand_by_id;
    for (const auto& [id, text] : cand_lines) cand_by_id[id] = text;

    std::vector<std::string> missing;
    std::vector<TokenList> cands, refs;
    for (const auto& [id, text] : ref_lines) {
        auto it = cand_by_id.find(id);
        if (it == cand_by_id.end()) {
            missing.push_back(id);
            continue;
        }
        cands.push_back(tokenize(it->second));
        refs.push_back(tokenize(text));
    }
    if (!missing.empty()) {
        std::string msg = "evaluate: candidate file is missing ids:";
        for (const auto& id : missing) msg += " " + id;
        throw std::runtime_error(msg);
    }

    MetricReport report = evaluate_nlg(cands, refs);

    const bool rule_based = !in.synth_spec_path.empty();
    const bool file_based = !in.pred_labels_path.empty() && !in.gold_labels_path.empty();
    if (rule_based || file_based) {
        std::vector<std::array<std::uint8_t, kTopicCount>> pred, gold;
        if (rule_based) {
            const auto spec = load_synthetic_spec(in.synth_spec_path);
            for (std::size_t i = 0; i < ref_lines.size(); ++i) {
                pred.push_back(rule_label(cands[i], spec));
                gold.push_back(in.gold_labels_path.empty()
                                   ? rule_label(refs[i], spec)
                                   : std::array<std::uint8_t, kTopicCount>{});
            }
            if (!in.gold_labels_path.empty()) {
                std::map<std::string, std::array<std::uint8_t, kTopicCount>> by_id;
                for (const auto& [id, bits] : read_label_file(in.gold_labels_path)) by_id[id] = bits;
                for (std::size_t i = 0; i < ref_lines.size(); ++i) {
                    auto it = by_id.find(ref_lines[i].first);
                    if (it == by_id.end())
                        throw std::runtime_error("evaluate: gold label file is missing id " +
                                                 ref_lines[i].first);
                    gold[i] = it->second;
                }
            }
        } else {
            std::map<std::string, std::array<std::uint8_t, kTopicCount>> pred_by, gold_by;
            for (const auto& [id, bits] : read_label_file(in.pred_labels_path)) pred_by[id] = bits;
            for (const auto& [id, bits] : read_label_file(in.gold_labels_path)) gold_by[id] = bits;
            for (const auto& [id, text] : ref_lines) {
                auto pit = pred_by.find(id);
                auto git = gold_by.find(id);
                if (pit == pred_by.end() || git == gold_by.end())
                    throw std::runtime_error("evaluate: label files are missing id " + id);
                pred.push_back(pit->second);
                gold.push_back(git->second);
            }
        }
        report.ce = ce_metrics(pred, gold);
    }
    return report;
}

std::vector<RetrieveRow> cmd_retrieve(const std::string& index_path, const std::string& ids_path,
                                      const std::string& queries_path,
                                      const std::string& query_ids_path, std::size_t k,
                                      bool exclude_self) {
    auto index = RetrievalIndex::load(index_path, ids_path);
    auto queries = load_queries(queries_path, query_ids_path);
    if (k > index.size())
        std::cerr << "warning: k=" << k << " exceeds index size " << index.size()
                  << "; returning " << index.size() << " rows per query\n";

    std::vector<std::pair<std::string, std::size_t>> ordered(queries.row_of.begin(),
                                                             queries.row_of.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });

    std::vector<RetrieveRow> rows;
    for (const auto& [qid, row] : ordered) {
        const float* q = queries.tensor.values.data() + row * queries.tensor.shape[1];
        auto hits = index.query_topk(q, queries.tensor.shape[1], k,
                                     exclude_self ? qid : std::string());
        for (std::size_t r = 0; r < hits.size(); ++r)
            rows.push_back({qid, r + 1, hits[r].id, hits[r].similarity});
    }
    return rows;
}

std::vector<SweepCell> cmd_sweep(const RunConfig& base, const std::vector<std::size_t>& nr_grid,
                                 const std::vector<std::size_t>& nk_grid,
                                 const std::string& out_tsv) {
    std::vector<SweepCell> cells;
    for (auto nr : nr_grid) {
        for (auto nk : nk_grid) {
            SweepCell cell;
            cell.n_r = nr;
            cell.n_k = nk;
            RunConfig cfg = base;
            cfg.n_r = nr;
            cfg.n_k = nk;
            try {
                auto train = cmd_train(cfg);
                cell.run_dir = train.run_dir;
                const std::string gen_path = train.run_dir + "/generated.test.txt";
                cmd_generate(cfg, train.best_dir, "test", gen_path);

                // references come straight from the corpus test split
                auto corpus = load_corpus(cfg.corpus);
                std::vector<std::pair<std::string, std::string>> refs;
                for (const auto* rec : split_of(corpus, "test"))
                    refs.emplace_back(rec->id, rec->report);
                const std::string ref_path = train.run_dir + "/references.test.txt";
                write_report_file(ref_path, refs);

                EvaluateInputs ev;
                ev.candidates_path = gen_path;
                ev.references_path = ref_path;
                ev.synth_spec_path = cfg.synth_spec;
                cell.metrics = cmd_evaluate(ev);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
                std::cerr << "sweep cell n_r=" << nr << " n_k=" << nk << " failed: " << e.what()
                          << "\n";
            }
            cells.push_back(std::move(cell));
        }
    }

    long best_idx = -1;
    double best_bleu4 = -1.0;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].ok && cells[i].metrics.bleu4 > best_bleu4) {
            best_bleu4 = cells[i].metrics.bleu4;
            best_idx = static_cast<long>(i);
        }
    if (best_idx >= 0) cells[best_idx].best = true;

    if (!out_tsv.empty()) {
        const auto parent = fs::path(out_tsv).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        std::ofstream out(out_tsv, std::ios::trunc);
        out << "n_r\tn_k\tstatus\tbleu1\tbleu2\tbleu3\tbleu4\tmeteor\trouge_l\tce_precision\t"
               "ce_recall\tce_f1\tbest\trun_dir\n";
        for (const auto& c : cells) {
            char buf[512];
            const auto& m = c.metrics;
            const double cp = m.ce ? m.ce->precision : 0.0;
            const double cr = m.ce ? m.ce->recall : 0.0;
            const double cf = m.ce ? m.ce->f1 : 0.0;
            std::snprintf(buf, sizeof(buf),
                          "%zu\t%zu\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%d\t%s\n",
                          c.n_r, c.n_k, c.ok ? "ok" : "failed", m.bleu1, m.bleu2, m.bleu3, m.bleu4,
                          m.meteor, m.rouge_l, cp, cr, cf, c.best ? 1 : 0, c.run_dir.c_str());
            out << buf;
        }
    }
    return cells;
}

}  // namespace tksg
