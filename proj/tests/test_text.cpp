#include <filesystem>

#include "doctest.h"
#include "tksg/text.hpp"

using namespace tksg;

TEST_CASE("tokenize: lowercasing, punctuation split, empty input, idempotence") {
    CHECK(tokenize("Lungs are clear.") == std::vector<std::string>{"lungs", "are", "clear", "."});
    CHECK(tokenize("").empty());
    CHECK(tokenize("  \t\n ").empty());
    CHECK(tokenize("no pleural effusion, no pneumothorax.") ==
          std::vector<std::string>{"no", "pleural", "effusion", ",", "no", "pneumothorax", "."});

    // round trip: tokenizing the detokenized join changes nothing
    auto toks = tokenize("The cardiac silhouette is enlarged; no effusion.");
    CHECK(tokenize(detokenize(toks)) == toks);
}

TEST_CASE("vocabulary: reserved ids, unk fallback, duplicate rejection") {
    Vocabulary v;
    CHECK(v.size() == 4);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kBos) == "<bos>");
    CHECK(v.token(Vocabulary::kEos) == "<eos>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");

    const auto id = v.add("effusion");
    CHECK(id == 4);
    CHECK(v.id("effusion") == 4);
    CHECK(v.id("missing") == Vocabulary::kUnk);
    CHECK_THROWS_AS(v.add("effusion"), std::invalid_argument);

    CHECK(v.encode({"effusion", "nope"}) == std::vector<std::size_t>{4, Vocabulary::kUnk});
}

TEST_CASE("build_vocab: frequency order, min_count threshold, determinism") {
    std::vector<std::vector<std::string>> reports = {
        {"effusion", "effusion", "pleural"},
        {"effusion", "clear", "clear", "apex"},
    };
    auto v = build_vocab(reports, 1);
    // effusion x3, clear x2, then apex/pleural lexicographically
    CHECK(v.token(4) == "effusion");
    CHECK(v.token(5) == "clear");
    CHECK(v.token(6) == "apex");
    CHECK(v.token(7) == "pleural");

    auto v2 = build_vocab(reports, 2);
    CHECK(v2.size() == 6);  // 4 reserved + effusion + clear
    CHECK(v2.id("apex") == Vocabulary::kUnk);

    auto v3 = build_vocab(reports, 1);
    CHECK(v3.tokens() == v.tokens());

    CHECK_THROWS_AS(build_vocab({}, 1), std::invalid_argument);
}

TEST_CASE("vocabulary save/load round trip") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "tksg_vocab.txt").string();
    auto v = build_vocab({{"basilar", "opacity", "opacity"}}, 1);
    save_vocab(path, v);
    auto loaded = load_vocab(path);
    CHECK(loaded.tokens() == v.tokens());
}

TEST_CASE("build_concepts: counting example, stop words, too-few candidates, determinism") {
    std::vector<std::vector<std::string>> reports = {
        tokenize("effusion effusion pleural"),
        tokenize("effusion"),
    };
    auto c = build_concepts(reports, 2, {});
    CHECK(c.tokens == std::vector<std::string>{"effusion", "pleural"});
    CHECK(c.counts == std::vector<std::size_t>{3, 1});

    // all candidates removed as stop words
    CHECK_THROWS_AS(build_concepts({{"the", "a"}}, 1, {"the", "a"}), std::runtime_error);

    auto c2 = build_concepts(reports, 2, {});
    CHECK(c2.tokens == c.tokens);

    // stop words never enter the vocabulary
    auto c3 = build_concepts(reports, 1, {"effusion"});
    CHECK(c3.tokens == std::vector<std::string>{"pleural"});
}

TEST_CASE("label_keywords: membership indicator against a set oracle") {
    auto vocab = build_concepts({tokenize("effusion pleural cardiomegaly edema opacity")}, 5, {});

    CHECK(label_keywords(tokenize("nothing relevant here"), vocab) ==
          std::vector<std::uint8_t>(5, 0));

    std::vector<std::string> everything = vocab.tokens;
    CHECK(label_keywords(everything, vocab) == std::vector<std::uint8_t>(5, 1));

    auto report = tokenize("mild effusion with edema");
    auto labels = label_keywords(report, vocab);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const bool in_report =
            std::find(report.begin(), report.end(), vocab.tokens[i]) != report.end();
        CHECK(labels[i] == (in_report ? 1 : 0));
    }
}

TEST_CASE("concept file round trip keeps order and counts") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "tksg_concepts.tsv").string();
    auto c = build_concepts({tokenize("effusion effusion pleural pleural pleural edema")}, 3, {});
    save_concepts(path, c);
    auto loaded = load_concepts(path);
    CHECK(loaded.tokens == c.tokens);
    CHECK(loaded.counts == c.counts);
    CHECK(loaded.index.at("pleural") == 0);
}

TEST_CASE("stopword file round trip and shipped defaults") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "tksg_stop.txt").string();
    save_stopwords(path, default_stopwords());
    auto loaded = load_stopwords(path);
    CHECK(loaded.size() == default_stopwords().size());
    CHECK(loaded.count("the") == 1);
    CHECK(loaded.count(".") == 1);
}
