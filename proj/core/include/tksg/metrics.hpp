#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tksg/corpus.hpp"

namespace tksg {

using TokenList = std::vector<std::string>;

struct CeScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double meteor = 0.0;
    double rouge_l = 0.0;
    std::optional<CeScores> ce;

    std::string to_json() const;
    std::string to_tsv_header() const;
    std::string to_tsv_row() const;
};

// Corpus-level BLEU-n: geometric mean of clipped modified n-gram precisions
// (orders 1..n, uniform weights) times the brevity penalty exp(min(0, 1-r/c)).
double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
            std::size_t n);

// LCS-based F-measure with beta=1.2, averaged over samples.
double rouge_l(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
               double beta = 1.2);

// Exact-unigram-match METEOR: F_mean = 10PR/(R+9P), chunk penalty
// 0.5*(chunks/matches)^3, zero when nothing matches; averaged over samples.
double meteor_lite(const std::vector<TokenList>& candidates,
                   const std::vector<TokenList>& references);

// Micro-averaged precision/recall/F1 over all (sample, label) pairs.
CeScores ce_metrics(const std::vector<std::array<std::uint8_t, kTopicCount>>& predicted,
                    const std::vector<std::array<std::uint8_t, kTopicCount>>& gold);

MetricReport evaluate_nlg(const std::vector<TokenList>& candidates,
                          const std::vector<TokenList>& references);

}  // namespace tksg
