#include "tksg/corpus.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace tksg {

using nlohmann::json;

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
    Corpus corpus;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_corpus: line " + std::to_string(lineno) + " of " +
                                     path + ": " + e.what());
        }
        const auto where = "load_corpus: line " + std::to_string(lineno) + " of " + path;
        for (const char* field : {"id", "image_ref", "report", "topics", "split"})
            if (!j.contains(field))
                throw std::runtime_error(where + ": missing field '" + std::string(field) + "'");
        SampleRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.image_ref = j.at("image_ref").get<std::string>();
        rec.report = j.at("report").get<std::string>();
        rec.split = j.at("split").get<std::string>();
        const auto& topics = j.at("topics");
        if (!topics.is_array() || topics.size() != kTopicCount)
            throw std::runtime_error(where + ": field 'topics' must be an array of " +
                                     std::to_string(kTopicCount) + " integers");
        for (std::size_t i = 0; i < kTopicCount; ++i) {
            const int t = topics[i].get<int>();
            if (t != 0 && t != 1)
                throw std::runtime_error(where + ": field 'topics' entries must be 0 or 1");
            rec.topics[i] = static_cast<std::uint8_t>(t);
        }
        if (rec.report.empty()) throw std::runtime_error(where + ": field 'report' is empty");
        if (rec.split != "train" && rec.split != "val" && rec.split != "test")
            throw std::runtime_error(where + ": field 'split' must be train|val|test");
        if (!ids.insert(rec.id).second)
            throw std::runtime_error(where + ": duplicate id '" + rec.id + "'");
        corpus.push_back(std::move(rec));
    }
    if (corpus.empty()) throw std::runtime_error("load_corpus: no records in " + path);
    return corpus;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
    for (const auto& rec : corpus) {
        json j;
        j["id"] = rec.id;
        j["image_ref"] = rec.image_ref;
        j["report"] = rec.report;
        j["topics"] = std::vector<int>(rec.topics.begin(), rec.topics.end());
        j["split"] = rec.split;
        out << j.dump() << '\n';
    }
}

std::vector<const SampleRecord*> split_of(const Corpus& corpus, const std::string& split) {
    std::vector<const SampleRecord*> out;
    for (const auto& rec : corpus)
        if (rec.split == split) out.push_back(&rec);
    return out;
}

}  // namespace tksg
