#include "foresthash/retrieval.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "foresthash/parallel.hpp"

namespace foresthash {

void RetrievalIndex::validate() const {
    if (labels.size() != codes.rows())
        throw ValidationError("retrieval index has " + std::to_string(codes.rows()) + " codes but " +
                              std::to_string(labels.size()) + " labels");
}

std::vector<std::size_t> query_radius(const RetrievalIndex& index, std::span<const std::uint64_t> q, int r) {
    if (r < 0) throw ValidationError("query radius must be >= 0");
    if (q.size() != index.codes.stride())
        throw ValidationError("query has " + std::to_string(q.size()) + " words, index rows have " +
                              std::to_string(index.codes.stride()));
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < index.codes.rows(); ++i)
        if (hamming(index.codes.row(i), q) <= r) hits.push_back(i);
    return hits;
}

std::vector<std::size_t> query_radius(const RetrievalIndex& index, const HashCode& q, int r) {
    if (q.size() != index.codes.bits())
        throw ValidationError("query code has " + std::to_string(q.size()) + " bits, index codes have " +
                              std::to_string(index.codes.bits()));
    return query_radius(index, q.words(), r);
}

namespace {

struct QueryOutcome {
    std::size_t retrieved = 0;
    std::size_t hits = 0;
    std::size_t relevant = 0;
    double seconds = 0.0;
};

}  // namespace

RetrievalMetrics evaluate(const RetrievalIndex& index, const CodeMatrix& queries,
                          std::span<const std::int32_t> query_labels, int r, unsigned threads) {
    index.validate();
    if (queries.rows() == 0) throw ValidationError("evaluate: empty query set");
    if (query_labels.size() != queries.rows())
        throw ValidationError("evaluate: " + std::to_string(queries.rows()) + " queries but " +
                              std::to_string(query_labels.size()) + " labels");
    if (queries.bits() != index.codes.bits())
        throw ValidationError("evaluate: query codes have " + std::to_string(queries.bits()) +
                              " bits, index codes have " + std::to_string(index.codes.bits()));
    if (r < 0) throw ValidationError("query radius must be >= 0");

    std::vector<QueryOutcome> outcomes(queries.rows());
    parallel_for(queries.rows(), threads, [&](std::size_t qi) {
        auto& o = outcomes[qi];
        const auto start = std::chrono::steady_clock::now();
        const auto retrieved = query_radius(index, queries.row(qi), r);
        o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        o.retrieved = retrieved.size();
        for (auto i : retrieved)
            if (index.labels[i] == query_labels[qi]) ++o.hits;
        for (auto label : index.labels)
            if (label == query_labels[qi]) ++o.relevant;
    });

    RetrievalMetrics m;
    m.num_queries = queries.rows();
    m.radius = r;
    double precision_sum = 0.0, recall_sum = 0.0, seconds = 0.0;
    std::size_t precision_n = 0, recall_n = 0;
    for (const auto& o : outcomes) {
        seconds += o.seconds;
        if (o.retrieved == 0) {
            ++m.queries_rejected;
        } else {
            precision_sum += static_cast<double>(o.hits) / static_cast<double>(o.retrieved);
            ++precision_n;
        }
        if (o.relevant > 0) {
            recall_sum += static_cast<double>(o.hits) / static_cast<double>(o.relevant);
            ++recall_n;
        }
    }
    m.precision = precision_n ? 100.0 * precision_sum / static_cast<double>(precision_n) : 0.0;
    m.recall = recall_n ? 100.0 * recall_sum / static_cast<double>(recall_n) : 0.0;
    m.mean_query_time_us = 1e6 * seconds / static_cast<double>(m.num_queries);
    return m;
}

CodeMatrix hash_dataset(const ForestEncoder& encoder, const BlockSelection& selection, const Features& features,
                        unsigned threads) {
    if (encoder.num_trees() == 0) throw ValidationError("hash_dataset: forest has no trees");
    return concat_blocks(encoder.encode(features, threads), selection.indices);
}

CodeMatrix hash_dataset(const Forest& forest, const BlockSelection& selection, const Features& features,
                        unsigned threads) {
    return hash_dataset(ForestEncoder(forest), selection, features, threads);
}

EncodeTiming bench_encode(const Forest& forest, const BlockSelection& selection, const Features& features,
                          int repetitions, unsigned threads) {
    if (features.rows() == 0) throw ValidationError("bench_encode: empty data");
    if (repetitions < 1) throw ValidationError("bench_encode: repetitions must be >= 1");

    const ForestEncoder encoder(forest);
    std::vector<double> per_sample(static_cast<std::size_t>(repetitions));
    for (auto& t : per_sample) {
        const auto start = std::chrono::steady_clock::now();
        (void)hash_dataset(encoder, selection, features, threads);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        t = 1e6 * s / static_cast<double>(features.rows());
    }

    EncodeTiming timing;
    timing.repetitions = repetitions;
    for (auto t : per_sample) timing.mean_us += t;
    timing.mean_us /= repetitions;
    for (auto t : per_sample) timing.stddev_us += (t - timing.mean_us) * (t - timing.mean_us);
    timing.stddev_us = repetitions > 1 ? std::sqrt(timing.stddev_us / (repetitions - 1)) : 0.0;
    return timing;
}

}  // namespace foresthash
