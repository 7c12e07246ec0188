#include "tksg/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tksg {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (c >= 0x80) {
            cur.push_back(static_cast<char>(c));
        } else if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            flush();
        } else {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
        }
    }
    flush();
    return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) token_to_id_[id_to_token_[i]] = i;
}

std::size_t Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token))
        throw std::invalid_argument("vocabulary: duplicate token '" + token + "'");
    const std::size_t id = id_to_token_.size();
    id_to_token_.push_back(token);
    token_to_id_[token] = id;
    return id;
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (auto i : ids) tokens.push_back(token(i));
    return tokens;
}

namespace {

// frequency-descending, ties broken lexicographically ascending
std::vector<std::pair<std::string, std::size_t>> ranked_counts(
    const std::vector<std::vector<std::string>>& reports,
    const std::unordered_set<std::string>& skip) {
    std::map<std::string, std::size_t> counts;
    for (const auto& rep : reports)
        for (const auto& tok : rep)
            if (!skip.count(tok)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return ranked;
}

}  // namespace

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& reports,
                       std::size_t min_count) {
    if (reports.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    Vocabulary vocab;
    for (const auto& [token, count] : ranked_counts(reports, {}))
        if (count >= min_count) vocab.add(token);
    return vocab;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_vocab: cannot open " + path);
    for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_vocab: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    if (lines.size() < 4 || lines[0] != "<pad>" || lines[1] != "<bos>" || lines[2] != "<eos>" ||
        lines[3] != "<unk>")
        throw std::runtime_error("load_vocab: missing reserved tokens in " + path);
    Vocabulary vocab;
    for (std::size_t i = 4; i < lines.size(); ++i) vocab.add(lines[i]);
    return vocab;
}

ConceptVocabulary build_concepts(const std::vector<std::vector<std::string>>& reports,
                                 std::size_t n_w,
                                 const std::unordered_set<std::string>& stopwords) {
    if (reports.empty()) throw std::invalid_argument("build_concepts: empty corpus");
    auto ranked = ranked_counts(reports, stopwords);
    if (ranked.size() < n_w)
        throw std::runtime_error("build_concepts: only " + std::to_string(ranked.size()) +
                                 " distinct candidates for N_W=" + std::to_string(n_w));
    ConceptVocabulary vocab;
    vocab.tokens.reserve(n_w);
    vocab.counts.reserve(n_w);
    for (std::size_t i = 0; i < n_w; ++i) {
        vocab.index[ranked[i].first] = i;
        vocab.tokens.push_back(ranked[i].first);
        vocab.counts.push_back(ranked[i].second);
    }
    return vocab;
}

std::vector<std::uint8_t> label_keywords(const std::vector<std::string>& report_tokens,
                                         const ConceptVocabulary& vocab) {
    std::vector<std::uint8_t> labels(vocab.size(), 0);
    for (const auto& tok : report_tokens) {
        auto it = vocab.index.find(tok);
        if (it != vocab.index.end()) labels[it->second] = 1;
    }
    return labels;
}

void save_concepts(const std::string& path, const ConceptVocabulary& vocab) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_concepts: cannot open " + path);
    for (std::size_t i = 0; i < vocab.size(); ++i)
        out << vocab.tokens[i] << '\t' << vocab.counts[i] << '\n';
}

ConceptVocabulary load_concepts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_concepts: cannot open " + path);
    ConceptVocabulary vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("load_concepts: malformed line " + std::to_string(lineno) +
                                     " in " + path);
        const std::string token = line.substr(0, tab);
        const std::size_t count = std::stoull(line.substr(tab + 1));
        vocab.index[token] = vocab.tokens.size();
        vocab.tokens.push_back(token);
        vocab.counts.push_back(count);
    }
    if (vocab.tokens.empty()) throw std::runtime_error("load_concepts: empty file " + path);
    return vocab;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_stopwords: cannot open " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) words.insert(line);
    return words;
}

void save_stopwords(const std::string& path, const std::vector<std::string>& words) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_stopwords: cannot open " + path);
    for (const auto& w : words) out << w << '\n';
}

const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words = {
        "a",   "an",  "and",  "are", "as",    "at",   "be",   "been", "by",   "for", "from",
        "has", "have", "in",  "is",  "it",    "its",  "no",   "not",  "of",   "on",  "or",
        "than", "that", "the", "there", "these", "this", "to", "was",  "were", "with", ".",
        ",",   ";",   ":",    "!",   "?",     "(",    ")",    "-",    "/",
    };
    return words;
}

}  // namespace tksg
