#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tksg {

// Lowercases, splits punctuation into single-character tokens, and splits on
// whitespace. Bytes >= 0x80 are kept as word characters.
std::vector<std::string> tokenize(const std::string& text);

// Inverse presentation form: tokens joined by single spaces.
std::string detokenize(const std::vector<std::string>& tokens);

// Token <-> id bijection with fixed reserved ids.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kBos = 1;
    static constexpr std::size_t kEos = 2;
    static constexpr std::size_t kUnk = 3;

    Vocabulary();

    std::size_t size() const { return id_to_token_.size(); }
    const std::string& token(std::size_t id) const { return id_to_token_.at(id); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    // Adds a non-reserved token; duplicate additions are an error.
    std::size_t add(const std::string& token);
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
    std::size_t id(const std::string& token) const;  // kUnk when absent

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::size_t> token_to_id_;
};

// Tokens with count >= min_count, ordered by frequency then lexicographically,
// appended after the four reserved ids.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& reports,
                       std::size_t min_count = 1);

void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

// The N_W most frequent non-stop-word report tokens, frequency-descending
// with lexicographic tie-break.
struct ConceptVocabulary {
    std::vector<std::string> tokens;
    std::vector<std::size_t> counts;
    std::unordered_map<std::string, std::size_t> index;

    std::size_t size() const { return tokens.size(); }
    bool contains(const std::string& t) const { return index.count(t) > 0; }
};

ConceptVocabulary build_concepts(const std::vector<std::vector<std::string>>& reports,
                                 std::size_t n_w,
                                 const std::unordered_set<std::string>& stopwords);

// Multi-hot membership vector of length |vocab|.
std::vector<std::uint8_t> label_keywords(const std::vector<std::string>& report_tokens,
                                         const ConceptVocabulary& vocab);

// One "token<TAB>count" line per concept, frequency-descending.
void save_concepts(const std::string& path, const ConceptVocabulary& vocab);
ConceptVocabulary load_concepts(const std::string& path);

// One token per line.
std::unordered_set<std::string> load_stopwords(const std::string& path);
void save_stopwords(const std::string& path, const std::vector<std::string>& words);

// The stop-word list shipped with the artifact.
const std::vector<std::string>& default_stopwords();

}  // namespace tksg
