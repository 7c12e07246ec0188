#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tksg {

struct RetrievalHit {
    std::size_t row = 0;
    std::string id;
    double similarity = 0.0;
};

// Immutable store of L2-normalized report embeddings supporting exact cosine
// top-k by exhaustive scan. Safe for concurrent queries once built.
class RetrievalIndex {
public:
    RetrievalIndex() = default;

    // Rows are normalized at build time; zero rows and duplicate ids are rejected.
    static RetrievalIndex build(const std::vector<float>& embeddings, std::size_t rows,
                                std::size_t dim, std::vector<std::string> ids);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const float* row(std::size_t r) const { return data_.data() + r * dim_; }
    long row_of_id(const std::string& id) const;  // -1 when absent

    // Exact top-k by cosine similarity, ties broken by lower row index.
    // k is clamped to the index size. exclude_id drops one exact id match.
    std::vector<RetrievalHit> query_topk(const float* query, std::size_t dim, std::size_t k,
                                         const std::string& exclude_id = "") const;
    std::vector<RetrievalHit> query_topk(const std::vector<float>& query, std::size_t k,
                                         const std::string& exclude_id = "") const;

    // Persistence: embeddings in the binary tensor format plus a sidecar text
    // file with one id per line, same ordering.
    void save(const std::string& tensor_path, const std::string& ids_path) const;
    static RetrievalIndex load(const std::string& tensor_path, const std::string& ids_path);

private:
    std::vector<float> data_;  // row-major, rows L2-normalized
    std::vector<std::string> ids_;
    std::size_t dim_ = 0;
};

}  // namespace tksg
