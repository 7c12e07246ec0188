#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tksg/harness.hpp"
#include "tksg/rng.hpp"
#include "tksg/synthetic.hpp"
#include "tksg/text.hpp"

using namespace tksg;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    std::string dir;
    SyntheticSpec spec;
    RunConfig run;
};

// tiny end-to-end setup: synthetic corpus + vocab + concepts + config
Workspace make_workspace(const std::string& name, std::size_t train_n, double noise,
                         std::uint64_t seed, const std::string& variant) {
    Workspace ws;
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    ws.dir = dir.string();

    ws.spec = default_synthetic_spec();
    ws.spec.train_samples = train_n;
    ws.spec.val_samples = 8;
    ws.spec.test_samples = 8;
    ws.spec.noise_rate = noise;
    ws.spec.n_patches = 8;
    ws.spec.feature_dim = 32;
    ws.spec.embed_dim = 16;
    auto out = generate_synthetic(ws.spec, seed, ws.dir);

    std::vector<std::vector<std::string>> train_reports;
    for (const auto* rec : split_of(out.corpus, "train")) train_reports.push_back(tokenize(rec->report));
    auto vocab = build_vocab(train_reports, 1);
    save_vocab(ws.dir + "/vocab.txt", vocab);

    std::unordered_set<std::string> stop(default_stopwords().begin(), default_stopwords().end());
    // tiny corpora may not reach the desired concept count
    std::unordered_set<std::string> distinct;
    for (const auto& rep : train_reports)
        for (const auto& tok : rep)
            if (!stop.count(tok)) distinct.insert(tok);
    const std::size_t n_w = std::min<std::size_t>(24, distinct.size());
    auto concepts = build_concepts(train_reports, n_w, stop);
    save_concepts(ws.dir + "/concepts.tsv", concepts);

    ws.run.d_h = 32;
    ws.run.d_b = 16;
    ws.run.enc_layers = 1;
    ws.run.dec_layers = 2;
    ws.run.n_heads = 4;
    ws.run.t_max = 40;
    ws.run.n_r = 5;
    ws.run.n_w = n_w;
    ws.run.n_k = std::min<std::size_t>(6, n_w);
    ws.run.variant = variant;
    ws.run.epochs = 2;
    ws.run.batch_size = 4;
    ws.run.dropout = 0.0;
    ws.run.seed = seed;
    ws.run.corpus = out.corpus_path;
    ws.run.vocab = ws.dir + "/vocab.txt";
    ws.run.concepts = ws.dir + "/concepts.tsv";
    ws.run.index = out.index_path;
    ws.run.index_ids = out.index_ids_path;
    ws.run.queries = out.queries_path;
    ws.run.queries_ids = out.queries_ids_path;
    ws.run.synth_spec = out.spec_path;
    ws.run.out_dir = ws.dir + "/runs";
    return ws;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("train: one epoch smoke run writes a loadable checkpoint and log") {
    auto ws = make_workspace("tksg_hn_smoke", 4, 0.0, 11, "TKSG");
    ws.run.epochs = 1;
    auto result = cmd_train(ws.run);
    CHECK(result.epochs_run == 1);
    CHECK(fs::exists(fs::path(result.best_dir) / "meta.json"));
    CHECK(fs::exists(fs::path(result.best_dir) / "params" / "decoder" / "cls.bin"));
    CHECK(fs::exists(result.log_path));

    auto gen = cmd_generate(ws.run, result.best_dir, "test", ws.dir + "/gen.txt");
    CHECK(gen.count == 8);
    for (const auto& [id, text] : gen.lines) CHECK(!id.empty());
}

TEST_CASE("train: identical seeds replay bitwise identical losses") {
    auto ws1 = make_workspace("tksg_hn_det1", 6, 0.1, 21, "TKSG");
    auto ws2 = make_workspace("tksg_hn_det2", 6, 0.1, 21, "TKSG");
    ws1.run.dropout = 0.1;
    ws2.run.dropout = 0.1;
    auto r1 = cmd_train(ws1.run);
    auto r2 = cmd_train(ws2.run);
    REQUIRE(r1.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].train_all == r2.log[i].train_all);
        CHECK(r1.log[i].val_rep == r2.log[i].val_rep);
    }
}

TEST_CASE("train: resume from the last checkpoint replays the next epoch bitwise") {
    auto ws_full = make_workspace("tksg_hn_resume_full", 6, 0.1, 33, "TKSG");
    ws_full.run.epochs = 3;
    auto full = cmd_train(ws_full.run);
    REQUIRE(full.log.size() == 3);

    auto ws_part = make_workspace("tksg_hn_resume_part", 6, 0.1, 33, "TKSG");
    ws_part.run.epochs = 2;
    auto part = cmd_train(ws_part.run);
    REQUIRE(part.log.size() == 2);
    // same config except epochs -> different run dir; move state over so the
    // resumed run sees it
    ws_part.run.epochs = 3;
    const std::string target = ws_part.run.run_dir();
    fs::create_directories(target);
    fs::copy(part.run_dir, target, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    auto resumed = cmd_train(ws_part.run, true);
    REQUIRE(resumed.log.size() == 1);
    CHECK(resumed.log[0].epoch == 2);
    CHECK(resumed.log[0].train_all == full.log[2].train_all);
    CHECK(resumed.log[0].val_rep == full.log[2].val_rep);
}

TEST_CASE("variant gating: BASE leaves topic and keyword parameters at initialization") {
    auto ws = make_workspace("tksg_hn_gate", 6, 0.0, 41, "BASE");
    auto result = cmd_train(ws.run);

    // reconstruct the initialization and compare the gated parameter files
    Dataset data = load_dataset(ws.run);
    TksgModel<float> fresh(ModelConfig::from_run(ws.run, data.vocab.size(),
                                                 std::max<std::size_t>(data.d_e, 1)),
                           ws.run.seed);
    for (const auto& [name, t] : fresh.params().items()) {
        if (name.rfind("topic/", 0) != 0 && name.rfind("keyword/", 0) != 0 &&
            name.rfind("retrieval/", 0) != 0)
            continue;
        auto stored = load_tensor((fs::path(result.best_dir) / "params" / (name + ".bin")).string());
        REQUIRE(stored.values.size() == t.numel());
        for (std::size_t i = 0; i < stored.values.size(); ++i)
            CHECK(stored.values[i] == static_cast<float>(t.values()[i]));
    }

    // and the decoder parameters did change
    auto cls = load_tensor((fs::path(result.best_dir) / "params/decoder/word.bin").string());
    auto fresh_word = fresh.params().find("decoder/word");
    bool moved = false;
    for (std::size_t i = 0; i < cls.values.size(); ++i)
        if (cls.values[i] != static_cast<float>(fresh_word.values()[i])) moved = true;
    CHECK(moved);
}

TEST_CASE("TSG run keeps keyword parameters exactly; KSG keeps topic parameters") {
    auto tsg = make_workspace("tksg_hn_tsg", 5, 0.0, 43, "TSG");
    auto r_tsg = cmd_train(tsg.run);
    Dataset d_tsg = load_dataset(tsg.run);
    TksgModel<float> fresh(ModelConfig::from_run(tsg.run, d_tsg.vocab.size(),
                                                 std::max<std::size_t>(d_tsg.d_e, 1)),
                           tsg.run.seed);
    for (const auto& [name, t] : fresh.params().items()) {
        if (name.rfind("keyword/", 0) != 0) continue;
        auto stored = load_tensor((fs::path(r_tsg.best_dir) / "params" / (name + ".bin")).string());
        for (std::size_t i = 0; i < stored.values.size(); ++i)
            CHECK(stored.values[i] == static_cast<float>(t.values()[i]));
    }

    auto ksg = make_workspace("tksg_hn_ksg", 5, 0.0, 47, "KSG");
    auto r_ksg = cmd_train(ksg.run);
    Dataset d_ksg = load_dataset(ksg.run);
    TksgModel<float> fresh2(ModelConfig::from_run(ksg.run, d_ksg.vocab.size(),
                                                  std::max<std::size_t>(d_ksg.d_e, 1)),
                            ksg.run.seed);
    for (const auto& [name, t] : fresh2.params().items()) {
        if (name.rfind("topic/", 0) != 0) continue;
        auto stored = load_tensor((fs::path(r_ksg.best_dir) / "params" / (name + ".bin")).string());
        for (std::size_t i = 0; i < stored.values.size(); ++i)
            CHECK(stored.values[i] == static_cast<float>(t.values()[i]));
    }
}

TEST_CASE("gradient isolation: the report loss never reaches W_KD") {
    auto ws = make_workspace("tksg_hn_isolate", 4, 0.0, 51, "TKSG");
    Dataset data = load_dataset(ws.run);
    TksgModel<float> model(ModelConfig::from_run(ws.run, data.vocab.size(), data.d_e), ws.run.seed);
    // the zero-initialized head would block every upstream gradient
    Tensor<float> cls = model.params().find("decoder/cls");
    auto cls_rng = make_rng(51, "cls");
    std::normal_distribution<double> g01(0.0, 0.3);
    for (auto& v : cls.mutable_values()) v = float(g01(cls_rng));

    const auto& s = data.train[0];
    auto visual = sample_visual(model, s);
    auto g = model.guide(visual, s.retrieval_raw);
    auto losses = model.losses(visual, g, s.gold_ids, s.rec->topics, s.concepts);

    model.params().zero_grad();
    backward(losses.report);
    auto w_kd = model.params().find("keyword/detector/w");
    for (auto v : w_kd.grad()) CHECK(v == 0.0f);
    auto w_emb = model.params().find("keyword/emb");
    double emb_norm = 0;
    for (auto v : w_emb.grad()) emb_norm += std::abs(double(v));
    CHECK(emb_norm > 0.0);

    // the keyword loss is the only path into W_KD
    model.params().zero_grad();
    backward(losses.keyword);
    double kd_norm = 0;
    for (auto v : w_kd.grad()) kd_norm += std::abs(double(v));
    CHECK(kd_norm > 0.0);
}

TEST_CASE("generate: beam 1 equals greedy file and decoding is deterministic") {
    auto ws = make_workspace("tksg_hn_beam", 6, 0.0, 61, "TKSG");
    ws.run.epochs = 2;
    auto result = cmd_train(ws.run);

    ws.run.beam = 1;
    auto g1 = cmd_generate(ws.run, result.best_dir, "test", ws.dir + "/beam1.txt");
    auto g2 = cmd_generate(ws.run, result.best_dir, "test", ws.dir + "/beam1b.txt");
    CHECK(slurp(ws.dir + "/beam1.txt") == slurp(ws.dir + "/beam1b.txt"));

    ws.run.beam = 3;
    auto g3 = cmd_generate(ws.run, result.best_dir, "test", ws.dir + "/beam3.txt");
    CHECK(g3.count == g1.count);

    // vocabulary swap must be rejected
    RunConfig bad = ws.run;
    bad.vocab = ws.dir + "/vocab_other.txt";
    {
        Vocabulary v;
        v.add("zzz");
        save_vocab(bad.vocab, v);
    }
    CHECK_THROWS_AS(cmd_generate(bad, result.best_dir, "test", ws.dir + "/bad.txt"),
                    std::runtime_error);
}

TEST_CASE("evaluate: aligned files, perfect candidates, missing ids") {
    auto ws = make_workspace("tksg_hn_eval", 4, 0.0, 71, "TKSG");
    auto corpus = load_corpus(ws.run.corpus);
    std::vector<std::pair<std::string, std::string>> refs;
    for (const auto* rec : split_of(corpus, "test")) refs.emplace_back(rec->id, rec->report);
    write_report_file(ws.dir + "/refs.txt", refs);
    write_report_file(ws.dir + "/cands.txt", refs);  // candidates == references

    EvaluateInputs ev;
    ev.candidates_path = ws.dir + "/cands.txt";
    ev.references_path = ws.dir + "/refs.txt";
    ev.synth_spec_path = ws.run.synth_spec;
    auto rep = cmd_evaluate(ev);
    CHECK(rep.bleu1 == doctest::Approx(1.0));
    CHECK(rep.bleu4 == doctest::Approx(1.0));
    CHECK(rep.rouge_l == doctest::Approx(1.0));
    REQUIRE(rep.ce.has_value());
    CHECK(rep.ce->precision == doctest::Approx(1.0));
    CHECK(rep.ce->recall == doctest::Approx(1.0));
    CHECK(rep.ce->f1 == doctest::Approx(1.0));

    auto short_cands = refs;
    short_cands.pop_back();
    write_report_file(ws.dir + "/short.txt", short_cands);
    ev.candidates_path = ws.dir + "/short.txt";
    CHECK_THROWS_WITH_AS(cmd_evaluate(ev), doctest::Contains(refs.back().first.c_str()),
                         std::runtime_error);
}

TEST_CASE("retrieve: self-query returns itself at similarity 1") {
    auto ws = make_workspace("tksg_hn_retr", 6, 0.0, 81, "TKSG");
    auto rows = cmd_retrieve(ws.run.index, ws.run.index_ids, ws.run.queries, ws.run.queries_ids, 1,
                             /*exclude_self=*/false);
    // train queries share their embedding with the indexed report
    std::size_t hits = 0;
    for (const auto& r : rows)
        if (r.query_id.rfind("train-", 0) == 0) {
            CHECK(r.id == r.query_id);
            CHECK(r.similarity == doctest::Approx(1.0).epsilon(1e-5));
            ++hits;
        }
    CHECK(hits == 6);
}

TEST_CASE("sweep: a 1x1 grid equals a single train+evaluate; 2x2 emits four rows") {
    auto ws = make_workspace("tksg_hn_sweep", 4, 0.0, 91, "TKSG");
    ws.run.epochs = 1;
    auto cells = cmd_sweep(ws.run, {3}, {4}, ws.dir + "/sweep.tsv");
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].ok);
    CHECK(cells[0].best);

    auto cells4 = cmd_sweep(ws.run, {2, 3}, {4, 6}, ws.dir + "/sweep4.tsv");
    REQUIRE(cells4.size() == 4);
    std::size_t best_count = 0;
    for (const auto& c : cells4) {
        CHECK(c.ok);
        best_count += c.best ? 1 : 0;
    }
    CHECK(best_count == 1);

    std::ifstream tsv(ws.dir + "/sweep4.tsv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(tsv, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 5);  // header + 4 cells
}
