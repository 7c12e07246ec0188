#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "tksg/text.hpp"

namespace tksg {

// Next-token log-probabilities over the whole vocabulary, conditioned on the
// emitted content prefix (BOS handling is the caller's concern).
using StepFn = std::function<std::vector<double>(const std::vector<std::size_t>&)>;

struct DecodeResult {
    std::vector<std::size_t> tokens;  // content tokens, EOS excluded
    double score = -std::numeric_limits<double>::infinity();  // sum_logp / emitted count
};

namespace detail_search {

struct Hypothesis {
    std::vector<std::size_t> emitted;  // includes the terminal EOS when present
    double sum_logp = 0.0;
    bool finished = false;

    double score() const {
        return emitted.empty() ? -std::numeric_limits<double>::infinity()
                               : sum_logp / static_cast<double>(emitted.size());
    }
};

// normalized score descending, ties toward the lexicographically smaller
// emitted sequence
inline bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.score(), sb = b.score();
    if (sa != sb) return sa > sb;
    return a.emitted < b.emitted;
}

inline std::vector<std::size_t> content_of(const Hypothesis& h) {
    std::vector<std::size_t> out = h.emitted;
    if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
    return out;
}

}  // namespace detail_search

// Length-normalized beam search. Hypotheses end at EOS or t_max; finished
// hypotheses stay in the beam and compete with active ones; ties break toward
// the smaller token sequence. PAD and BOS are never emitted.
inline DecodeResult beam_search(const StepFn& step, std::size_t vocab_size, std::size_t beam,
                                std::size_t t_max) {
    using detail_search::Hypothesis;
    if (beam == 0 || t_max == 0 || vocab_size < 4)
        throw std::invalid_argument("beam_search: need beam >= 1, t_max >= 1, vocab >= 4");

    std::vector<Hypothesis> frontier{Hypothesis{}};
    for (std::size_t t = 1; t <= t_max; ++t) {
        bool any_active = false;
        for (const auto& h : frontier)
            if (!h.finished) any_active = true;
        if (!any_active) break;

        std::vector<Hypothesis> candidates;
        candidates.reserve(frontier.size() * vocab_size);
        for (const auto& h : frontier) {
            if (h.finished) {
                candidates.push_back(h);
                continue;
            }
            const auto logp = step(detail_search::content_of(h));
            for (std::size_t tok = 0; tok < vocab_size; ++tok) {
                if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
                Hypothesis next = h;
                next.emitted.push_back(tok);
                next.sum_logp += logp[tok];
                next.finished = (tok == Vocabulary::kEos) || (t == t_max);
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), detail_search::hyp_before);
        if (candidates.size() > beam) candidates.resize(beam);
        frontier = std::move(candidates);
    }

    const auto& best = frontier.front();
    return {detail_search::content_of(best), best.score()};
}

// Argmax decoding with the same termination and tie rules as beam width 1.
inline DecodeResult greedy_decode(const StepFn& step, std::size_t vocab_size, std::size_t t_max) {
    detail_search::Hypothesis h;
    for (std::size_t t = 1; t <= t_max && !h.finished; ++t) {
        const auto logp = step(detail_search::content_of(h));
        std::size_t best_tok = Vocabulary::kEos;
        double best_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t tok = 0; tok < vocab_size; ++tok) {
            if (tok == Vocabulary::kPad || tok == Vocabulary::kBos) continue;
            if (logp[tok] > best_lp) {
                best_lp = logp[tok];
                best_tok = tok;
            }
        }
        h.emitted.push_back(best_tok);
        h.sum_logp += best_lp;
        h.finished = (best_tok == Vocabulary::kEos) || (t == t_max);
    }
    return {detail_search::content_of(h), h.score()};
}

}  // namespace tksg
