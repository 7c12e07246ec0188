#include "tksg/retrieval_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "tksg/tensor_io.hpp"

namespace tksg {

RetrievalIndex RetrievalIndex::build(const std::vector<float>& embeddings, std::size_t rows,
                                     std::size_t dim, std::vector<std::string> ids) {
    if (rows == 0 || dim == 0) throw std::invalid_argument("retrieval: empty embedding matrix");
    if (embeddings.size() != rows * dim)
        throw std::invalid_argument("retrieval: embedding size does not match rows x dim");
    if (ids.size() != rows) throw std::invalid_argument("retrieval: id count does not match rows");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            throw std::invalid_argument("retrieval: duplicate id '" + id + "'");

    RetrievalIndex index;
    index.dim_ = dim;
    index.ids_ = std::move(ids);
    index.data_.resize(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const float v = embeddings[r * dim + c];
            norm2 += static_cast<double>(v) * v;
        }
        if (norm2 <= 0.0)
            throw std::invalid_argument("retrieval: zero embedding at row " + std::to_string(r) +
                                        " (id '" + index.ids_[r] + "')");
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (std::size_t c = 0; c < dim; ++c) index.data_[r * dim + c] = embeddings[r * dim + c] * inv;
    }
    return index;
}

long RetrievalIndex::row_of_id(const std::string& id) const {
    for (std::size_t r = 0; r < ids_.size(); ++r)
        if (ids_[r] == id) return static_cast<long>(r);
    return -1;
}

std::vector<RetrievalHit> RetrievalIndex::query_topk(const float* query, std::size_t dim,
                                                     std::size_t k,
                                                     const std::string& exclude_id) const {
    if (dim != dim_)
        throw std::invalid_argument("retrieval: query dim " + std::to_string(dim) +
                                    " does not match index dim " + std::to_string(dim_));
    if (k == 0) throw std::invalid_argument("retrieval: k must be >= 1");
    double qnorm2 = 0.0;
    for (std::size_t c = 0; c < dim; ++c) qnorm2 += static_cast<double>(query[c]) * query[c];
    if (qnorm2 <= 0.0) throw std::invalid_argument("retrieval: zero query vector");
    const double qinv = 1.0 / std::sqrt(qnorm2);

    // exhaustive scan; similarity is exact up to rounding, ties -> lower row
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        if (!exclude_id.empty() && ids_[r] == exclude_id) continue;
        const float* row = data_.data() + r * dim_;
        double dot = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) dot += static_cast<double>(row[c]) * query[c];
        scored.emplace_back(dot * qinv, r);
    }
    const std::size_t kk = std::min(k, scored.size());
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), better);

    std::vector<RetrievalHit> hits;
    hits.reserve(kk);
    for (std::size_t i = 0; i < kk; ++i)
        hits.push_back({scored[i].second, ids_[scored[i].second], scored[i].first});
    return hits;
}

std::vector<RetrievalHit> RetrievalIndex::query_topk(const std::vector<float>& query, std::size_t k,
                                                     const std::string& exclude_id) const {
    return query_topk(query.data(), query.size(), k, exclude_id);
}

void RetrievalIndex::save(const std::string& tensor_path, const std::string& ids_path) const {
    save_tensor(tensor_path, {ids_.size(), dim_}, data_);
    std::ofstream out(ids_path, std::ios::trunc);
    if (!out) throw std::runtime_error("retrieval: cannot open " + ids_path);
    for (const auto& id : ids_) out << id << '\n';
}

RetrievalIndex RetrievalIndex::load(const std::string& tensor_path, const std::string& ids_path) {
    TensorFile f = load_tensor(tensor_path);
    if (f.shape.size() != 2)
        throw std::runtime_error("retrieval: expected a 2-d embedding tensor in " + tensor_path);
    std::ifstream in(ids_path);
    if (!in) throw std::runtime_error("retrieval: cannot open " + ids_path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ids.push_back(line);

    auto index = build(f.values, f.shape[0], f.shape[1], std::move(ids));
    // persisted rows are already unit-norm; keep them verbatim so that a
    // save/load round trip is bitwise exact
    bool already_normalized = true;
    for (std::size_t r = 0; r < f.shape[0] && already_normalized; ++r) {
        double n = 0.0;
        for (std::size_t c = 0; c < f.shape[1]; ++c)
            n += static_cast<double>(f.values[r * f.shape[1] + c]) * f.values[r * f.shape[1] + c];
        if (std::abs(std::sqrt(n) - 1.0) > 1e-6) already_normalized = false;
    }
    if (already_normalized) index.data_ = f.values;
    return index;
}

}  // namespace tksg
