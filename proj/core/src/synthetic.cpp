#include "tksg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "tksg/rng.hpp"
#include "tksg/tensor_io.hpp"
#include "tksg/text.hpp"

namespace tksg {

namespace fs = std::filesystem;
using nlohmann::json;

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.topics = {
        {"cardiomegaly",
         0,
         {"the cardiac silhouette is enlarged .", "stable cardiomegaly is again seen ."},
         {"cardiomegaly", "cardiac", "silhouette", "enlarged"}},
        {"edema",
         1,
         {"mild interstitial edema is present .", "vascular congestion suggests edema ."},
         {"edema", "interstitial", "vascular", "congestion"}},
        {"effusion",
         2,
         {"there is blunting of the costophrenic angle .", "a small pleural effusion is seen ."},
         {"effusion", "pleural", "blunting", "costophrenic"}},
        {"atelectasis",
         3,
         {"linear basilar atelectasis is noted .", "there is collapse of the lower lobe ."},
         {"atelectasis", "basilar", "linear", "collapse"}},
        {"pneumonia",
         4,
         {"patchy airspace consolidation suggests pneumonia .", "infectious consolidation is present ."},
         {"pneumonia", "consolidation", "airspace", "infectious"}},
        {"pneumothorax",
         5,
         {"a small apical pneumothorax is seen .", "visceral line with apical lucency ."},
         {"pneumothorax", "apical", "lucency", "visceral"}},
    };
    spec.fillers = {"lungs", "clear", "otherwise", "unremarkable", "bony",
                    "structures", "intact", "grossly", "normal", "limits"};
    return spec;
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.topics.empty() || spec.topics.size() > kTopicCount)
        throw std::invalid_argument("synthetic spec: topic count must be in [1," +
                                    std::to_string(kTopicCount) + "]");
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0)
        throw std::invalid_argument("synthetic spec: noise rate must be in [0,1)");
    if (spec.min_topics < 1 || spec.min_topics > spec.max_topics ||
        spec.max_topics > spec.topics.size())
        throw std::invalid_argument("synthetic spec: bad min/max topic draw range");
    if (spec.n_patches == 0 || spec.feature_dim == 0 || spec.embed_dim == 0)
        throw std::invalid_argument("synthetic spec: zero feature geometry");

    std::set<std::size_t> label_indices;
    for (const auto& topic : spec.topics) {
        if (topic.label_index >= kTopicCount)
            throw std::invalid_argument("synthetic spec: label index out of range for topic '" +
                                        topic.name + "'");
        if (!label_indices.insert(topic.label_index).second)
            throw std::invalid_argument("synthetic spec: duplicate label index for topic '" +
                                        topic.name + "'");
        if (topic.templates.empty())
            throw std::invalid_argument("synthetic spec: topic '" + topic.name + "' has no templates");
        if (topic.keywords.empty())
            throw std::invalid_argument("synthetic spec: topic '" + topic.name + "' has no keywords");
    }

    auto contains_phrase = [](const std::vector<std::string>& tokens,
                              const std::vector<std::string>& phrase) {
        if (phrase.empty() || phrase.size() > tokens.size()) return false;
        for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
            if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + i)) return true;
        return false;
    };

    for (std::size_t i = 0; i < spec.topics.size(); ++i) {
        // every template must carry at least one of its own signatures
        for (const auto& tmpl : spec.topics[i].templates) {
            const auto toks = tokenize(tmpl);
            bool carries = false;
            for (const auto& kw : spec.topics[i].keywords)
                if (contains_phrase(toks, tokenize(kw))) carries = true;
            if (!carries)
                throw std::invalid_argument("synthetic spec: template of topic '" +
                                            spec.topics[i].name + "' contains none of its keywords: " +
                                            tmpl);
        }
        // signatures must be mutually distinguishable
        for (const auto& kw : spec.topics[i].keywords) {
            const auto phrase = tokenize(kw);
            for (std::size_t j = 0; j < spec.topics.size(); ++j) {
                if (j == i) continue;
                for (const auto& tmpl : spec.topics[j].templates)
                    if (contains_phrase(tokenize(tmpl), phrase))
                        throw std::invalid_argument("synthetic spec: keyword '" + kw + "' of topic '" +
                                                    spec.topics[i].name + "' appears in a template of '" +
                                                    spec.topics[j].name + "'");
            }
            for (const auto& filler : spec.fillers)
                if (contains_phrase(tokenize(filler), phrase) ||
                    contains_phrase(phrase, tokenize(filler)))
                    throw std::invalid_argument("synthetic spec: keyword '" + kw +
                                                "' collides with filler '" + filler + "'");
        }
    }
}

namespace {

std::vector<float> gaussian_unit_vector(std::mt19937_64& rng, std::size_t dim, double scl) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> v(dim);
    double norm2 = 0.0;
    for (auto& x : v) {
        const double g = dist(rng);
        x = static_cast<float>(g);
        norm2 += g * g;
    }
    const double inv = scl / std::sqrt(std::max(norm2, 1e-12));
    for (auto& x : v) x = static_cast<float>(x * inv);
    return v;
}

}  // namespace

SyntheticOutput generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::string& out_dir) {
    validate_spec(spec);
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "features");
    fs::create_directories(fs::path(out_dir) / "references");

    const std::size_t n_topics = spec.topics.size();

    // per-topic signal directions for features and retrieval anchors
    auto anchor_rng = make_rng(seed, "synthetic/anchors");
    std::vector<std::vector<float>> feature_anchor, embed_anchor;
    for (std::size_t t = 0; t < n_topics; ++t) {
        feature_anchor.push_back(gaussian_unit_vector(anchor_rng, spec.feature_dim, spec.signal_scale));
        embed_anchor.push_back(gaussian_unit_vector(anchor_rng, spec.embed_dim, 1.0));
    }
    const std::size_t block = std::max<std::size_t>(1, spec.n_patches / n_topics);

    SyntheticOutput out;
    std::vector<float> index_embeddings, query_embeddings;
    std::vector<std::string> index_ids, query_ids;

    struct SplitPlan {
        const char* name;
        std::size_t count;
    };
    const SplitPlan plans[] = {{"train", spec.train_samples},
                               {"val", spec.val_samples},
                               {"test", spec.test_samples}};

    std::size_t global_index = 0;
    for (const auto& plan : plans) {
        std::ofstream refs(fs::path(out_dir) / "references" / (std::string(plan.name) + ".txt"),
                           std::ios::trunc);
        for (std::size_t s = 0; s < plan.count; ++s, ++global_index) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s-%04zu", plan.name, s);
            const std::string id = idbuf;
            auto rng = make_rng(seed, "synthetic/sample/" + id);

            // draw 1..3 topics, listed in label order
            std::uniform_int_distribution<std::size_t> n_dist(spec.min_topics, spec.max_topics);
            const std::size_t k = n_dist(rng);
            std::vector<std::size_t> order(n_topics);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            std::vector<std::size_t> chosen(order.begin(), order.begin() + k);
            std::sort(chosen.begin(), chosen.end());

            // report: one template per topic, filler insertions at the noise rate
            std::vector<std::string> tokens;
            for (auto t : chosen) {
                const auto& tmpls = spec.topics[t].templates;
                std::uniform_int_distribution<std::size_t> t_dist(0, tmpls.size() - 1);
                const auto sent = tokenize(tmpls[t_dist(rng)]);
                tokens.insert(tokens.end(), sent.begin(), sent.end());
            }
            if (spec.noise_rate > 0.0 && !spec.fillers.empty()) {
                std::uniform_real_distribution<double> u(0.0, 1.0);
                std::uniform_int_distribution<std::size_t> f_dist(0, spec.fillers.size() - 1);
                std::vector<std::string> noisy;
                noisy.reserve(tokens.size() + 4);
                for (const auto& tok : tokens) {
                    if (u(rng) < spec.noise_rate) noisy.push_back(spec.fillers[f_dist(rng)]);
                    noisy.push_back(tok);
                }
                tokens = std::move(noisy);
            }

            SampleRecord rec;
            rec.id = id;
            rec.report = detokenize(tokens);
            rec.split = plan.name;
            for (auto t : chosen) rec.topics[spec.topics[t].label_index] = 1;

            // feature tensor: per-topic block signal plus dense noise
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::vector<float> feat(spec.n_patches * spec.feature_dim);
            for (auto& v : feat) v = static_cast<float>(gauss(rng) * spec.feature_noise);
            for (auto t : chosen) {
                const std::size_t lo = t * block;
                const std::size_t hi = std::min(lo + block, spec.n_patches);
                for (std::size_t r = lo; r < hi; ++r)
                    for (std::size_t c = 0; c < spec.feature_dim; ++c)
                        feat[r * spec.feature_dim + c] += feature_anchor[t][c];
            }
            const std::string feat_rel = "features/" + id + ".bin";
            save_tensor((fs::path(out_dir) / feat_rel).string(),
                        {spec.n_patches, spec.feature_dim}, feat);
            rec.image_ref = feat_rel;

            // retrieval-side embeddings: topic anchors plus noise; the report
            // embedding (index side, train only) and the query embedding draw
            // independent noise
            auto embed_with_noise = [&](std::vector<float>& dst) {
                std::vector<float> e(spec.embed_dim, 0.0f);
                for (auto t : chosen)
                    for (std::size_t c = 0; c < spec.embed_dim; ++c) e[c] += embed_anchor[t][c];
                for (std::size_t c = 0; c < spec.embed_dim; ++c)
                    e[c] += static_cast<float>(gauss(rng) * spec.embed_noise);
                dst.insert(dst.end(), e.begin(), e.end());
            };
            if (rec.split == "train") {
                embed_with_noise(index_embeddings);
                index_ids.push_back(id);
            }
            embed_with_noise(query_embeddings);
            query_ids.push_back(id);

            refs << id << '\t' << rec.report << '\n';
            out.corpus.push_back(std::move(rec));
        }
    }

    out.corpus_path = (fs::path(out_dir) / "corpus.jsonl").string();
    save_corpus(out.corpus_path, out.corpus);

    out.index_path = (fs::path(out_dir) / "index.bin").string();
    out.index_ids_path = (fs::path(out_dir) / "index.ids").string();
    save_tensor(out.index_path, {index_ids.size(), spec.embed_dim}, index_embeddings);
    {
        std::ofstream idf(out.index_ids_path, std::ios::trunc);
        for (const auto& id : index_ids) idf << id << '\n';
    }

    out.queries_path = (fs::path(out_dir) / "queries.bin").string();
    out.queries_ids_path = (fs::path(out_dir) / "queries.ids").string();
    save_tensor(out.queries_path, {query_ids.size(), spec.embed_dim}, query_embeddings);
    {
        std::ofstream idf(out.queries_ids_path, std::ios::trunc);
        for (const auto& id : query_ids) idf << id << '\n';
    }

    out.spec_path = (fs::path(out_dir) / "spec.json").string();
    save_synthetic_spec(out.spec_path, spec);
    return out;
}

std::array<std::uint8_t, kTopicCount> rule_label(const std::vector<std::string>& report_tokens,
                                                 const SyntheticSpec& spec) {
    std::array<std::uint8_t, kTopicCount> labels{};
    for (const auto& topic : spec.topics) {
        bool hit = false;
        for (const auto& kw : topic.keywords) {
            const auto phrase = tokenize(kw);
            if (phrase.empty() || phrase.size() > report_tokens.size()) continue;
            for (std::size_t i = 0; !hit && i + phrase.size() <= report_tokens.size(); ++i)
                if (std::equal(phrase.begin(), phrase.end(), report_tokens.begin() + i)) hit = true;
            if (hit) break;
        }
        if (hit) labels[topic.label_index] = 1;
    }
    return labels;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_synthetic_spec: cannot open " + path);
    json j;
    in >> j;
    SyntheticSpec spec;
    spec.topics.clear();
    for (const auto& tj : j.at("topics")) {
        SyntheticTopic t;
        t.name = tj.at("name").get<std::string>();
        t.label_index = tj.at("label_index").get<std::size_t>();
        t.templates = tj.at("templates").get<std::vector<std::string>>();
        t.keywords = tj.at("keywords").get<std::vector<std::string>>();
        spec.topics.push_back(std::move(t));
    }
    spec.train_samples = j.at("train_samples").get<std::size_t>();
    spec.val_samples = j.at("val_samples").get<std::size_t>();
    spec.test_samples = j.at("test_samples").get<std::size_t>();
    spec.fillers = j.at("fillers").get<std::vector<std::string>>();
    spec.noise_rate = j.at("noise_rate").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.min_topics = j.at("min_topics").get<std::size_t>();
    spec.max_topics = j.at("max_topics").get<std::size_t>();
    spec.n_patches = j.at("n_patches").get<std::size_t>();
    spec.feature_dim = j.at("feature_dim").get<std::size_t>();
    spec.embed_dim = j.at("embed_dim").get<std::size_t>();
    spec.signal_scale = j.at("signal_scale").get<double>();
    spec.feature_noise = j.at("feature_noise").get<double>();
    spec.embed_noise = j.at("embed_noise").get<double>();
    validate_spec(spec);
    return spec;
}

void save_synthetic_spec(const std::string& path, const SyntheticSpec& spec) {
    json j;
    j["topics"] = json::array();
    for (const auto& t : spec.topics) {
        json tj;
        tj["name"] = t.name;
        tj["label_index"] = t.label_index;
        tj["templates"] = t.templates;
        tj["keywords"] = t.keywords;
        j["topics"].push_back(tj);
    }
    j["train_samples"] = spec.train_samples;
    j["val_samples"] = spec.val_samples;
    j["test_samples"] = spec.test_samples;
    j["fillers"] = spec.fillers;
    j["noise_rate"] = spec.noise_rate;
    j["seed"] = spec.seed;
    j["min_topics"] = spec.min_topics;
    j["max_topics"] = spec.max_topics;
    j["n_patches"] = spec.n_patches;
    j["feature_dim"] = spec.feature_dim;
    j["embed_dim"] = spec.embed_dim;
    j["signal_scale"] = spec.signal_scale;
    j["feature_noise"] = spec.feature_noise;
    j["embed_noise"] = spec.embed_noise;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_synthetic_spec: cannot open " + path);
    out << j.dump(2) << '\n';
}

}  // namespace tksg
