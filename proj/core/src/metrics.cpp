#include "tksg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace tksg {

namespace {

void check_aligned(const std::vector<TokenList>& candidates,
                   const std::vector<TokenList>& references, const char* what) {
    if (candidates.empty())
        throw std::invalid_argument(std::string(what) + ": empty corpus");
    if (candidates.size() != references.size())
        throw std::invalid_argument(std::string(what) + ": candidate/reference count mismatch");
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const TokenList& tokens,
                                                             std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

std::size_t lcs_length(const TokenList& a, const TokenList& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

}  // namespace

double bleu(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
            std::size_t n) {
    check_aligned(candidates, references, "bleu");
    if (n == 0) throw std::invalid_argument("bleu: order must be >= 1");

    double log_prec_sum = 0.0;
    for (std::size_t order = 1; order <= n; ++order) {
        std::size_t clipped = 0, total = 0;
        for (std::size_t s = 0; s < candidates.size(); ++s) {
            auto cand = ngram_counts(candidates[s], order);
            auto ref = ngram_counts(references[s], order);
            for (const auto& [gram, count] : cand) {
                total += count;
                auto it = ref.find(gram);
                if (it != ref.end()) clipped += std::min(count, it->second);
            }
        }
        if (total == 0 || clipped == 0) return 0.0;
        log_prec_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }

    std::size_t c = 0, r = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        c += candidates[s].size();
        r += references[s].size();
    }
    if (c == 0) return 0.0;
    const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_prec_sum / static_cast<double>(n));
}

double rouge_l(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
               double beta) {
    check_aligned(candidates, references, "rouge_l");
    double total = 0.0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const std::size_t lcs = lcs_length(candidates[s], references[s]);
        if (lcs == 0 || candidates[s].empty() || references[s].empty()) continue;
        const double p = static_cast<double>(lcs) / static_cast<double>(candidates[s].size());
        const double r = static_cast<double>(lcs) / static_cast<double>(references[s].size());
        const double b2 = beta * beta;
        total += (1.0 + b2) * p * r / (r + b2 * p);
    }
    return total / static_cast<double>(candidates.size());
}

double meteor_lite(const std::vector<TokenList>& candidates,
                   const std::vector<TokenList>& references) {
    check_aligned(candidates, references, "meteor_lite");
    double total = 0.0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        const auto& ref = references[s];
        // greedy exact alignment: each candidate token takes the earliest
        // unused reference occurrence of the same word
        std::vector<bool> used(ref.size(), false);
        std::vector<long> match_pos(cand.size(), -1);
        std::size_t matches = 0;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && ref[j] == cand[i]) {
                    used[j] = true;
                    match_pos[i] = static_cast<long>(j);
                    ++matches;
                    break;
                }
            }
        }
        if (matches == 0 || cand.empty() || ref.empty()) continue;
        // chunks: maximal runs consecutive in both candidate and reference
        std::size_t chunks = 0;
        long prev_ref = -2;
        bool in_chunk = false;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (match_pos[i] < 0) {
                in_chunk = false;
                continue;
            }
            if (!in_chunk || match_pos[i] != prev_ref + 1) ++chunks;
            in_chunk = true;
            prev_ref = match_pos[i];
        }
        const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
        const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
        const double f_mean = 10.0 * p * r / (r + 9.0 * p);
        const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
        const double penalty = 0.5 * frag * frag * frag;
        total += f_mean * (1.0 - penalty);
    }
    return total / static_cast<double>(candidates.size());
}

CeScores ce_metrics(const std::vector<std::array<std::uint8_t, kTopicCount>>& predicted,
                    const std::vector<std::array<std::uint8_t, kTopicCount>>& gold) {
    if (predicted.size() != gold.size())
        throw std::invalid_argument("ce_metrics: prediction/gold count mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < predicted.size(); ++s) {
        for (std::size_t i = 0; i < kTopicCount; ++i) {
            const bool p = predicted[s][i] != 0;
            const bool g = gold[s][i] != 0;
            if (p && g) ++tp;
            else if (p && !g) ++fp;
            else if (!p && g) ++fn;
        }
    }
    CeScores out;
    out.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.f1 = (out.precision + out.recall) == 0.0
                 ? 0.0
                 : 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

MetricReport evaluate_nlg(const std::vector<TokenList>& candidates,
                          const std::vector<TokenList>& references) {
    MetricReport rep;
    rep.bleu1 = bleu(candidates, references, 1);
    rep.bleu2 = bleu(candidates, references, 2);
    rep.bleu3 = bleu(candidates, references, 3);
    rep.bleu4 = bleu(candidates, references, 4);
    rep.meteor = meteor_lite(candidates, references);
    rep.rouge_l = rouge_l(candidates, references);
    return rep;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["bleu1"] = bleu1;
    j["bleu2"] = bleu2;
    j["bleu3"] = bleu3;
    j["bleu4"] = bleu4;
    j["meteor"] = meteor;
    j["rouge_l"] = rouge_l;
    if (ce) {
        j["ce_precision"] = ce->precision;
        j["ce_recall"] = ce->recall;
        j["ce_f1"] = ce->f1;
    }
    return j.dump();
}

std::string MetricReport::to_tsv_header() const {
    std::string h = "bleu1\tbleu2\tbleu3\tbleu4\tmeteor\trouge_l";
    if (ce) h += "\tce_precision\tce_recall\tce_f1";
    return h;
}

std::string MetricReport::to_tsv_row() const {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::string row = fmt(bleu1) + "\t" + fmt(bleu2) + "\t" + fmt(bleu3) + "\t" + fmt(bleu4) +
                      "\t" + fmt(meteor) + "\t" + fmt(rouge_l);
    if (ce) row += "\t" + fmt(ce->precision) + "\t" + fmt(ce->recall) + "\t" + fmt(ce->f1);
    return row;
}

}  // namespace tksg
