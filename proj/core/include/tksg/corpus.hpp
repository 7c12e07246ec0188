#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tksg {

constexpr std::size_t kTopicCount = 14;

// One corpus entry: image/feature reference, report text, 14 topic labels,
// and its split assignment.
struct SampleRecord {
    std::string id;
    std::string image_ref;
    std::string report;
    std::array<std::uint8_t, kTopicCount> topics{};
    std::string split;  // train | val | test
};

using Corpus = std::vector<SampleRecord>;

// JSON-lines, one record per line. Malformed lines are reported with their
// line number; duplicate ids and bad topic arrays are rejected.
Corpus load_corpus(const std::string& path);
void save_corpus(const std::string& path, const Corpus& corpus);

std::vector<const SampleRecord*> split_of(const Corpus& corpus, const std::string& split);

}  // namespace tksg
