// foresthash: train forest hash functions, encode data, evaluate retrieval and time encoding.
//
// Exit codes: 0 success, 1 data or runtime error, 2 usage error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "foresthash/aggregation.hpp"
#include "foresthash/io.hpp"
#include "foresthash/retrieval.hpp"
#include "foresthash/training.hpp"

namespace fh = foresthash;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

/// Error caused by flag values that are individually valid but inconsistent.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataArgs {
    std::string data;
    std::string labels;
    std::string descriptor;
    std::string format = "auto";
    int label_column = -1;
    bool csv_header = false;
};

void add_data_options(CLI::App& cmd, DataArgs& a, const std::string& prefix = "", bool required = true) {
    auto* data = cmd.add_option("--" + prefix + "data", a.data, "Feature file (IDX images, CSV or raw f32le)")
                     ->check(CLI::ExistingFile);
    if (required) data->required();
    cmd.add_option("--" + prefix + "labels", a.labels, "IDX label file")->check(CLI::ExistingFile);
    if (prefix.empty()) {
        cmd.add_option("--format", a.format, "Input format")->check(CLI::IsMember({"auto", "idx", "csv", "raw"}));
        cmd.add_option("--descriptor", a.descriptor, "Descriptor for raw input (N=..,D=..,dtype=f32le)")
            ->check(CLI::ExistingFile);
        cmd.add_option("--label-column", a.label_column, "Zero-based label column for CSV input")
            ->check(CLI::NonNegativeNumber);
        cmd.add_flag("--csv-header", a.csv_header, "CSV input has a header line");
    }
}

fh::Dataset load_data(const DataArgs& a, const DataArgs& shared) {
    std::string format = shared.format;
    if (format == "auto") {
        if (a.data.ends_with(".csv"))
            format = "csv";
        else if (!shared.descriptor.empty())
            format = "raw";
        else
            format = "idx";
    }

    fh::Dataset data;
    if (format == "csv") {
        fh::io::CsvOptions opt;
        if (shared.label_column >= 0) opt.label_column = static_cast<std::size_t>(shared.label_column);
        opt.header = shared.csv_header;
        data = fh::io::load_csv(a.data, opt);
    } else if (format == "raw") {
        if (shared.descriptor.empty()) throw UsageError("raw input needs --descriptor");
        data = fh::io::load_raw(a.data, shared.descriptor);
    } else {
        data = fh::io::load_idx_images(a.data);
    }
    if (!a.labels.empty()) {
        auto labels = fh::io::load_idx_labels(a.labels);
        if (labels.size() != static_cast<std::size_t>(data.size()))
            throw fh::FormatError(std::to_string(data.size()) + " data rows in " + a.data + " but " +
                                      std::to_string(labels.size()) + " labels in " + a.labels,
                                  4);
        fh::io::attach_labels(data, std::move(labels));
    }
    data.validate();
    return data;
}

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    return rows;
}

/// Rows [skip, N) restricted to the first per_class rows of each class (0 = all).
fh::Dataset select_rows(const fh::Dataset& data, std::size_t skip, int per_class) {
    const auto n = static_cast<std::size_t>(data.size());
    if (skip > n) throw UsageError("--skip " + std::to_string(skip) + " exceeds " + std::to_string(n) + " rows");
    if (per_class <= 0) return skip == 0 ? data : data.subset(iota_rows(skip, n));
    if (!data.labels) throw UsageError("--per-class needs labels");
    std::vector<int> taken(static_cast<std::size_t>(data.num_classes), 0);
    std::vector<std::size_t> rows;
    for (std::size_t i = skip; i < n; ++i) {
        auto& t = taken[static_cast<std::size_t>((*data.labels)[i])];
        if (t < per_class) {
            ++t;
            rows.push_back(i);
        }
    }
    return data.subset(rows);
}

unsigned thread_count(int flag) {
    if (flag >= 0) return static_cast<unsigned>(flag);
    if (const char* env = std::getenv("FORESTHASH_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 0) throw UsageError("FORESTHASH_THREADS must be a non-negative integer");
        return static_cast<unsigned>(v);
    }
    return 0;
}

struct AggregateArgs {
    int bits = 36;
    std::string method = "mi";
    double lambda = 1.0;
    double labeled_fraction = 1.0;
    double mi_sample_split = 1.0;
};

void add_aggregate_options(CLI::App& cmd, AggregateArgs& a) {
    cmd.add_option("--bits", a.bits, "Target hash length L")->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--method", a.method, "Block selection: mutual information or random")
        ->check(CLI::IsMember({"mi", "random"}))
        ->capture_default_str();
    cmd.add_option("--lambda", a.lambda, "Weight of the block-label term")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd.add_option("--labeled-fraction", a.labeled_fraction,
                   "Fraction of training rows (from the front) whose labels feed the block-label term")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd.add_option("--mi-sample-split", a.mi_sample_split,
                   "Fraction of training rows (from the front) used for block-block MI")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
}

fh::AggregationResult run_aggregation(const fh::Forest& forest, const fh::Dataset& data, const AggregateArgs& a,
                                      std::uint64_t seed, unsigned threads) {
    if (a.mi_sample_split <= 0.0) throw UsageError("--mi-sample-split must be > 0");
    fh::AggregationConfig cfg;
    cfg.target_bits = a.bits;
    cfg.lambda = a.lambda;
    cfg.method = a.method == "random" ? fh::SelectionMethod::random : fh::SelectionMethod::mi;
    cfg.mi_sample_split = a.mi_sample_split;
    cfg.seed = seed;

    const auto blocks = fh::encode_dataset(forest, data.features, threads);
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> mask;
    if (data.labels && a.labeled_fraction > 0.0) {
        labels = *data.labels;
        const auto labeled = static_cast<std::size_t>(std::ceil(a.labeled_fraction * static_cast<double>(labels.size())));
        mask.assign(labels.size(), 0);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(labeled), std::uint8_t{1});
    }
    try {
        return fh::aggregate(blocks, labels, mask, cfg, threads);
    } catch (const fh::ConfigError& e) {
        throw UsageError(e.what());
    }
}

void print_selection(const fh::Forest& forest, const fh::AggregationResult& agg) {
    for (const auto& w : agg.warnings) std::cerr << "warning: " << w << "\n";
    const auto& sel = agg.selection;
    std::cout << "trees=" << forest.config.num_trees << " depth=" << forest.config.depth << " k=" << sel.k()
              << " bits=" << agg.budget.effective_bits
              << " method=" << (sel.method == fh::SelectionMethod::mi ? "mi" : "random") << " objective=";
    if (sel.objective_value)
        std::cout << std::setprecision(6) << *sel.objective_value;
    else
        std::cout << "none";
    std::cout << "\nselected blocks:";
    for (auto i : sel.indices) std::cout << ' ' << i;
    std::cout << "\n";
}

fh::io::Model require_selection(fh::io::Model model) {
    if (!model.selection) throw std::runtime_error("model has no block selection; run `reselect` first");
    return model;
}

fh::CodeMatrix hash_rows(const fh::io::Model& model, const fh::Features& features, unsigned threads) {
    return fh::hash_dataset(model.forest, *model.selection, features, threads);
}

void print_metrics(const fh::RetrievalMetrics& m, std::size_t db_size, std::size_t bits) {
    std::cout << std::fixed << std::setprecision(2) << "precision=" << m.precision << "% recall=" << m.recall
              << "% rejected=" << m.queries_rejected << " n_queries=" << m.num_queries << " radius=" << m.radius
              << "\n";
    std::cout << "\n  " << std::left << std::setw(18) << "bits" << bits << "\n  " << std::setw(18) << "database"
              << db_size << "\n  " << std::setw(18) << "queries" << m.num_queries << "\n  " << std::setw(18)
              << "radius" << m.radius << "\n  " << std::setw(18) << "precision (%)" << m.precision << "\n  "
              << std::setw(18) << "recall (%)" << m.recall << "\n  " << std::setw(18) << "rejected"
              << m.queries_rejected << "\n  " << std::setw(18) << "search (us/query)" << m.mean_query_time_us
              << "\n";
}

std::vector<std::int32_t> require_labels(const std::optional<std::vector<std::int32_t>>& labels,
                                         const std::string& what) {
    if (!labels) throw UsageError(what + " has no labels");
    return *labels;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random-forest hashing: train, encode, evaluate and benchmark"};
    app.require_subcommand(1);
    int threads_flag = -1;
    app.add_option("--threads", threads_flag, "Worker threads (0 = one per core; default $FORESTHASH_THREADS or 0)")
        ->check(CLI::NonNegativeNumber);

    // train
    auto* train = app.add_subcommand("train", "Train a forest and select code blocks");
    DataArgs train_data;
    fh::ForestConfig fc;
    std::string splitter = "subspace";
    std::size_t skip = 0;
    int per_class = 0;
    AggregateArgs train_agg;
    std::string train_out;
    add_data_options(*train, train_data);
    train->add_option("--trees", fc.num_trees, "Number of trees M")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--depth", fc.depth, "Tree depth d (levels including the root)")
        ->check(CLI::Range(fh::kMinDepth, fh::kMaxDepth))
        ->capture_default_str();
    train->add_option("--splitter", splitter, "Split learner")
        ->check(CLI::IsMember({"stump", "subspace"}))
        ->capture_default_str();
    train->add_option("--rank", fc.subspace_rank, "Subspace rank per branch")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    train->add_option("--sample-fraction", fc.sample_fraction, "Per-tree training subset fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    train->add_option("--candidates", fc.stump_candidates, "Random stump candidates per node")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--min-node-samples", fc.min_node_samples, "Smallest node that is still split")
        ->check(CLI::Range(2, std::numeric_limits<int>::max()))
        ->capture_default_str();
    train->add_option("--seed", fc.master_seed, "Master seed")->capture_default_str();
    train->add_option("--skip", skip, "Ignore the first N data rows")->capture_default_str();
    train->add_option("--per-class", per_class, "Use only the first K rows of each class (0 = all)")
        ->check(CLI::NonNegativeNumber);
    add_aggregate_options(*train, train_agg);
    train->add_option("--out", train_out, "Model file to write")->required();

    // reselect
    auto* reselect = app.add_subcommand("reselect", "Re-run block selection on an existing model");
    std::string reselect_model, reselect_out;
    DataArgs reselect_data;
    AggregateArgs reselect_agg;
    std::uint64_t reselect_seed = 0;
    std::size_t reselect_skip = 0;
    int reselect_per_class = 0;
    reselect->add_option("--model", reselect_model, "Model file")->required()->check(CLI::ExistingFile);
    add_data_options(*reselect, reselect_data);
    add_aggregate_options(*reselect, reselect_agg);
    reselect->add_option("--seed", reselect_seed, "Seed for random selection")->capture_default_str();
    reselect->add_option("--skip", reselect_skip, "Ignore the first N data rows");
    reselect->add_option("--per-class", reselect_per_class, "Use only the first K rows of each class")
        ->check(CLI::NonNegativeNumber);
    reselect->add_option("--out", reselect_out, "Model file to write")->required();

    // encode
    auto* encode = app.add_subcommand("encode", "Hash a dataset into a code file");
    std::string encode_model, encode_out;
    DataArgs encode_data;
    encode->add_option("--model", encode_model, "Model file")->required()->check(CLI::ExistingFile);
    add_data_options(*encode, encode_data);
    encode->add_option("--out", encode_out, "Code file to write")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Precision/recall of Hamming-radius retrieval");
    std::string eval_model, db_codes, query_codes;
    DataArgs eval_data, eval_queries;
    std::size_t query_count = 0;
    int radius = 0;
    eval->add_option("--db-codes", db_codes, "Database code file")->check(CLI::ExistingFile);
    eval->add_option("--query-codes", query_codes, "Query code file")->check(CLI::ExistingFile);
    eval->add_option("--model", eval_model, "Model file (to hash --data / --query-data)")->check(CLI::ExistingFile);
    add_data_options(*eval, eval_data, "", false);
    add_data_options(*eval, eval_queries, "query-", false);
    eval->add_option("--queries", query_count, "Use the first N rows of --data as queries, the rest as database");
    eval->add_option("--radius", radius, "Hamming radius r")->check(CLI::NonNegativeNumber)->capture_default_str();

    // bench
    auto* bench = app.add_subcommand("bench", "Time end-to-end encoding per sample");
    std::string bench_model;
    DataArgs bench_data;
    int repetitions = 10;
    std::size_t bench_limit = 0;
    bench->add_option("--model", bench_model, "Model file")->required()->check(CLI::ExistingFile);
    add_data_options(*bench, bench_data);
    bench->add_option("--repetitions", repetitions, "Timed repetitions")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench->add_option("--limit", bench_limit, "Use only the first N rows (0 = all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const unsigned threads = thread_count(threads_flag);

        if (*train) {
            fc.splitter = splitter == "stump" ? fh::Splitter::stump : fh::Splitter::subspace;
            const auto all = load_data(train_data, train_data);
            if (!all.labels) throw UsageError("train needs labels (--labels or --label-column)");
            const auto data = select_rows(all, skip, per_class);
            try {
                fc.validate(data.dim());
                (void)fh::block_budget(train_agg.bits, fh::TreeShape(fc.depth));
            } catch (const fh::ConfigError& e) {
                throw UsageError(e.what());
            }
            fh::io::Model model{fh::train_forest(data, fc, threads), std::nullopt};
            const auto agg = run_aggregation(model.forest, data, train_agg, fc.master_seed, threads);
            model.selection = agg.selection;
            fh::io::save_model(model, train_out);
            std::cout << "trained on " << data.size() << " samples of dimension " << data.dim() << "\n";
            print_selection(model.forest, agg);
        } else if (*reselect) {
            auto model = fh::io::load_model(reselect_model);
            const auto data = select_rows(load_data(reselect_data, reselect_data), reselect_skip, reselect_per_class);
            const auto agg = run_aggregation(model.forest, data, reselect_agg, reselect_seed, threads);
            model.selection = agg.selection;
            fh::io::save_model(model, reselect_out);
            print_selection(model.forest, agg);
        } else if (*encode) {
            const auto model = require_selection(fh::io::load_model(encode_model));
            const auto data = load_data(encode_data, encode_data);
            fh::io::CodeFile file{hash_rows(model, data.features, threads), data.labels};
            fh::io::save_codes(file, encode_out);
            std::cout << "encoded " << file.codes.rows() << " points into " << file.codes.bits() << "-bit codes\n";
        } else if (*eval) {
            fh::RetrievalIndex index;
            fh::CodeMatrix queries;
            std::vector<std::int32_t> query_labels;
            if (!db_codes.empty() || !query_codes.empty()) {
                if (db_codes.empty() || query_codes.empty())
                    throw UsageError("--db-codes and --query-codes must be given together");
                auto db = fh::io::load_codes(db_codes);
                auto q = fh::io::load_codes(query_codes);
                index = {std::move(db.codes), require_labels(db.labels, db_codes)};
                query_labels = require_labels(q.labels, query_codes);
                queries = std::move(q.codes);
            } else {
                if (eval_model.empty() || eval_data.data.empty())
                    throw UsageError("eval needs either --db-codes/--query-codes or --model with --data");
                const auto model = require_selection(fh::io::load_model(eval_model));
                const auto data = load_data(eval_data, eval_data);
                fh::Dataset db_part, query_part;
                if (!eval_queries.data.empty()) {
                    db_part = data;
                    query_part = load_data(eval_queries, eval_data);
                } else if (query_count > 0) {
                    if (query_count >= static_cast<std::size_t>(data.size()))
                        throw UsageError("--queries must be smaller than the number of data rows");
                    query_part = data.subset(iota_rows(0, query_count));
                    db_part = data.subset(iota_rows(query_count, static_cast<std::size_t>(data.size())));
                } else {
                    db_part = data;
                    query_part = data;
                }
                index = {hash_rows(model, db_part.features, threads), require_labels(db_part.labels, "database")};
                query_labels = require_labels(query_part.labels, "query set");
                queries = hash_rows(model, query_part.features, threads);
            }
            const auto metrics = fh::evaluate(index, queries, query_labels, radius, threads);
            print_metrics(metrics, index.codes.rows(), index.codes.bits());
        } else if (*bench) {
            const auto model = require_selection(fh::io::load_model(bench_model));
            auto data = load_data(bench_data, bench_data);
            if (bench_limit > 0 && bench_limit < static_cast<std::size_t>(data.size()))
                data = data.subset(iota_rows(0, bench_limit));
            const auto t = fh::bench_encode(model.forest, *model.selection, data.features, repetitions,
                                            threads == 0 ? 1 : threads);
            std::cout << std::fixed << std::setprecision(3) << "encode_us_per_sample=" << t.mean_us
                      << " stddev=" << t.stddev_us << " n=" << data.size() << " repetitions=" << t.repetitions
                      << " trees=" << model.forest.config.num_trees << " dim=" << model.forest.feature_dim << "\n";
            std::cout << "encode time: " << t.mean_us << " +- " << t.stddev_us << " us/sample\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
