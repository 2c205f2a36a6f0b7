#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

#include "foresthash/io.hpp"

using namespace foresthash;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("foresthash_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& name) const { return path / name; }
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x00000803);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>(i * 37));
    return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t n) {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x00000801);
    put_be32(b, n);
    for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(i % 10));
    return b;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_oracle(std::span<const std::uint8_t> bytes) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (auto b : bytes) {
        crc ^= b;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

void reseal(std::vector<std::uint8_t>& bytes) {
    const auto crc = crc32_oracle(std::span(bytes).first(bytes.size() - 4));
    for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(crc >> (8 * i));
}

AffineSubspace<double> random_subspace(std::mt19937_64& rng, Eigen::Index dim, int max_rank) {
    std::normal_distribution<double> g;
    AffineSubspace<double> s;
    s.mean.resize(dim);
    for (auto& v : s.mean) v = g(rng);
    const auto rank = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(max_rank + 1));
    s.basis.resize(dim, rank);
    for (Eigen::Index i = 0; i < s.basis.size(); ++i) s.basis.data()[i] = g(rng);
    return s;
}

io::Model random_model(std::mt19937_64& rng) {
    io::Model m;
    auto& c = m.forest.config;
    c.num_trees = 1 + static_cast<int>(rng() % 5);
    c.depth = 2 + static_cast<int>(rng() % 3);
    c.splitter = rng() % 2 ? Splitter::stump : Splitter::subspace;
    c.subspace_rank = static_cast<int>(rng() % 3);
    c.sample_fraction = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    c.stump_candidates = 1 + static_cast<int>(rng() % 200);
    c.min_node_samples = 2 + static_cast<int>(rng() % 10);
    c.master_seed = rng();
    m.forest.feature_dim = 3 + static_cast<Eigen::Index>(rng() % 5);
    const TreeShape shape(c.depth);
    for (int t = 0; t < c.num_trees; ++t) {
        Tree tree{shape, m.forest.feature_dim, {}};
        for (int h = 0; h < shape.internal_count(); ++h) {
            switch (rng() % 3) {
            case 0:
                tree.splits.emplace_back(Stump{static_cast<std::uint32_t>(rng() % static_cast<std::uint64_t>(m.forest.feature_dim)),
                                               std::normal_distribution<double>()(rng)});
                break;
            case 1:
                tree.splits.emplace_back(SubspaceSplit{random_subspace(rng, m.forest.feature_dim, c.subspace_rank),
                                                       random_subspace(rng, m.forest.feature_dim, c.subspace_rank)});
                break;
            default:
                tree.splits.emplace_back(Passthrough{rng() % 2 ? Branch::right : Branch::left});
            }
        }
        m.forest.trees.push_back(std::move(tree));
    }
    if (rng() % 3) {
        BlockSelection sel;
        sel.method = rng() % 2 ? SelectionMethod::mi : SelectionMethod::random;
        if (sel.method == SelectionMethod::mi) sel.objective_value = std::uniform_real_distribution<double>(0, 50)(rng);
        for (int t = 0; t < c.num_trees; ++t)
            if (rng() % 2) sel.indices.push_back(static_cast<std::uint32_t>(t));
        m.selection = sel;
    }
    return m;
}

io::CodeFile random_codes(std::mt19937_64& rng) {
    const std::size_t bits = 1 + rng() % 130, n = rng() % 40;
    io::CodeFile f{CodeMatrix(bits, n), std::nullopt};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < bits; ++p)
            if (rng() % 2) f.codes.set(i, p);
    if (rng() % 2) {
        f.labels.emplace();
        for (std::size_t i = 0; i < n; ++i) f.labels->push_back(static_cast<std::int32_t>(rng() % 100) - 3);
    }
    return f;
}

}  // namespace

TEST_CASE("IDX loading") {
    TempDir dir;
    write_bytes(dir / "img", idx_images(10, 2, 3));
    write_bytes(dir / "lab", idx_labels(10));
    const auto d = io::load_idx(dir / "img", dir / "lab");
    CHECK(d.size() == 10);
    CHECK(d.dim() == 6);
    CHECK(d.features(0, 1) == doctest::Approx(37.0 / 255.0));
    CHECK(d.features.maxCoeff() <= 1.0);
    CHECK(d.features.minCoeff() >= 0.0);
    REQUIRE(d.labels);
    CHECK((*d.labels)[3] == 3);
    CHECK(d.num_classes == 10);

    write_bytes(dir / "img0", idx_images(0, 28, 28));
    write_bytes(dir / "lab0", idx_labels(0));
    const auto empty = io::load_idx(dir / "img0", dir / "lab0");
    CHECK(empty.size() == 0);
    CHECK(empty.dim() == 784);

    write_bytes(dir / "lab9", idx_labels(9));
    try {
        io::load_idx(dir / "img", dir / "lab9");
        FAIL("expected a count mismatch");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
        CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }

    auto bad = idx_images(2, 2, 2);
    bad[3] = 0x01;
    write_bytes(dir / "bad", bad);
    CHECK_THROWS_AS(io::load_idx_images(dir / "bad"), FormatError);

    auto truncated = idx_images(4, 2, 2);
    truncated.resize(truncated.size() - 3);
    write_bytes(dir / "trunc", truncated);
    try {
        io::load_idx_images(dir / "trunc");
        FAIL("expected truncation");
    } catch (const FormatError& e) {
        CHECK(e.offset() == truncated.size());
    }
}

TEST_CASE("CSV loading") {
    TempDir dir;
    write_text(dir / "a.csv", "1.5,2,0\n-3,4e2,1\n5, 6 ,2\n");
    io::CsvOptions opt;
    opt.label_column = 2;
    const auto d = io::load_csv(dir / "a.csv", opt);
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.features(1, 1) == 400.0);
    CHECK(d.features(2, 1) == 6.0);
    CHECK(*d.labels == std::vector<std::int32_t>{0, 1, 2});

    const auto nolabel = io::load_csv(dir / "a.csv");
    CHECK(nolabel.dim() == 3);
    CHECK_FALSE(nolabel.labels.has_value());

    write_text(dir / "h.csv", "x,y\n1,2\n");
    io::CsvOptions header;
    header.header = true;
    CHECK(io::load_csv(dir / "h.csv", header).size() == 1);

    write_text(dir / "ragged.csv", "1,2\n3,4\n5\n");
    try {
        io::load_csv(dir / "ragged.csv");
        FAIL("expected ragged error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    write_text(dir / "nan.csv", "1,2\n3,abc\n");
    try {
        io::load_csv(dir / "nan.csv");
        FAIL("expected non-numeric error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("raw float32 loading") {
    TempDir dir;
    std::vector<std::uint8_t> bytes;
    for (float v : {1.0f, -2.5f, 3.25f, 0.0f, 8.0f, 1e-3f}) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    write_bytes(dir / "x.f32", bytes);
    write_text(dir / "x.desc", "N=3,D=2,dtype=f32le\n");
    const auto d = io::load_raw(dir / "x.f32", dir / "x.desc");
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.features(0, 1) == -2.5);
    CHECK(d.features(2, 1) == doctest::Approx(1e-3));

    write_text(dir / "y.desc", "N=4,D=2,dtype=f32le");
    try {
        io::load_raw(dir / "x.f32", dir / "y.desc");
        FAIL("expected a size error");
    } catch (const FormatError& e) {
        const std::string what = e.what();
        CHECK(what.find("32") != std::string::npos);
        CHECK(what.find("24") != std::string::npos);
    }

    CHECK(io::parse_descriptor("N=10,D=784,dtype=f32le").cols == 784);
    CHECK_THROWS_AS(io::parse_descriptor("N=10,D=784,dtype=f64le"), FormatError);
    CHECK_THROWS_AS(io::parse_descriptor("N=10"), FormatError);
}

TEST_CASE("model round-trip on randomized models") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = random_model(rng);
        const auto bytes = io::serialize_model(m);
        const auto back = io::deserialize_model(bytes);
        CHECK(back == m);
        CHECK(io::serialize_model(back) == bytes);
    }
}

TEST_CASE("code file round-trip on randomized code files") {
    std::mt19937_64 rng(4321);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto f = random_codes(rng);
        const auto bytes = io::serialize_codes(f);
        const std::size_t expected = io::kCodeHeaderBytes + f.codes.rows() * packed_size(f.codes.bits()) +
                                     (f.labels ? 4 * f.codes.rows() : 0) + 4;
        CHECK(bytes.size() == expected);
        CHECK(io::deserialize_codes(bytes) == f);
    }
}

TEST_CASE("code file layout") {
    std::mt19937_64 rng(5);
    io::CodeFile f{CodeMatrix(36, 1000), std::vector<std::int32_t>(1000, 7)};
    for (std::size_t i = 0; i < 1000; ++i) f.codes.set(i, rng() % 36);
    const auto bytes = io::serialize_codes(f);
    CHECK(bytes.size() == 20 + 1000 * 5 + 1000 * 4 + 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FHC1");
    CHECK(bytes[8] == 36);  // L, little-endian
    CHECK(bytes[12] == (1000 & 0xFF));
    CHECK(bytes[13] == (1000 >> 8));

    const auto crc = crc32_oracle(std::span(bytes).first(bytes.size() - 4));
    CHECK(bytes[bytes.size() - 4] == (crc & 0xFF));
    CHECK(bytes.back() == (crc >> 24));

    // Record 0 holds code 0 packed least-significant-bit first.
    const auto packed = pack_bits(f.codes.code(0));
    CHECK(std::equal(packed.begin(), packed.end(), bytes.begin() + 20));

    TempDir dir;
    io::save_codes(f, dir / "c.fhc");
    CHECK(fs::file_size(dir / "c.fhc") == bytes.size());
    CHECK(io::is_code_file(dir / "c.fhc"));
    CHECK(io::load_codes(dir / "c.fhc") == f);
}

TEST_CASE("corruption and version errors") {
    std::mt19937_64 rng(77);
    const auto m = random_model(rng);
    const auto bytes = io::serialize_model(m);

    for (std::size_t at : {std::size_t{4}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        auto flipped = bytes;
        flipped[at] ^= 0x10;
        CHECK_THROWS_AS(io::deserialize_model(flipped), CorruptionError);
    }

    auto newer = bytes;
    newer[4] = 2;
    reseal(newer);
    CHECK_THROWS_AS(io::deserialize_model(newer), UnsupportedVersionError);

    auto codes = io::serialize_codes(random_codes(rng));
    codes[codes.size() / 2] ^= 0x01;
    CHECK_THROWS_AS(io::deserialize_codes(codes), CorruptionError);
    auto codes_v = io::serialize_codes(random_codes(rng));
    codes_v[4] = 9;
    reseal(codes_v);
    CHECK_THROWS_AS(io::deserialize_codes(codes_v), UnsupportedVersionError);

    CHECK_THROWS_AS(io::deserialize_model(io::serialize_codes(random_codes(rng))), FormatError);
    CHECK_THROWS_AS(io::deserialize_codes(std::vector<std::uint8_t>{'F', 'H'}), FormatError);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    truncated.insert(truncated.end(), 4, 0);
    reseal(truncated);
    CHECK_THROWS_AS(io::deserialize_model(truncated), FormatError);
}

TEST_CASE("trained model survives save and load") {
    Dataset d;
    d.num_classes = 3;
    d.labels.emplace();
    d.features.resize(60, 5);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < 60; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) d.features(i, j) = g(rng) + (j == i % 3 ? 4.0 : 0.0);
        d.labels->push_back(static_cast<std::int32_t>(i % 3));
    }
    ForestConfig cfg;
    cfg.num_trees = 64;
    io::Model m{train_forest(d, cfg, 1), BlockSelection{{0, 1, 2, 3, 4, 5}, 12.5, SelectionMethod::mi}};
    TempDir dir;
    io::save_model(m, dir / "m.fh");
    const auto back = io::load_model(dir / "m.fh");
    CHECK(back == m);
    CHECK_FALSE(io::is_code_file(dir / "m.fh"));
    const auto a = encode_dataset(m.forest, d.features, 1);
    const auto b = encode_dataset(back.forest, d.features, 1);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].codes == b[t].codes);
}
