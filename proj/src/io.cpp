#include "foresthash/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace foresthash::io {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::string_view kModelMagic = "FHM1";
constexpr std::string_view kCodeMagic = "FHC1";

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    constexpr std::size_t kChunk = std::size_t{1} << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const auto len = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(len));
    }
    return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    std::vector<std::uint8_t> finish() {
        const auto crc = crc32_of(buf_);
        u32(crc);
        return std::move(buf_);
    }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > bytes_.size() - pos_)
            throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                                  std::to_string(n) + " more bytes)",
                              pos_);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::uint32_t be32() {
        auto b = take(4);
        return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw FormatError(what_ + ": " + msg + " at byte " + std::to_string(at), at);
    }

private:
    std::uint64_t le(int n) {
        auto b = take(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b[static_cast<std::size_t>(i)]} << (8 * i);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

/// Checks magic and trailer CRC, returns a reader over the payload (without the trailer)
/// positioned just after the magic.
ByteReader open_checked(std::span<const std::uint8_t> bytes, std::string_view magic, const std::string& what) {
    if (bytes.size() < magic.size() + 2 + 4)
        throw FormatError(what + ": file too short (" + std::to_string(bytes.size()) + " bytes)", 0);
    if (!std::equal(magic.begin(), magic.end(), bytes.begin()))
        throw FormatError(what + ": bad magic, expected \"" + std::string(magic) + "\"", 0);
    const auto payload = bytes.first(bytes.size() - 4);
    ByteReader trailer(bytes.last(4), what);
    const auto stored = trailer.u32();
    const auto actual = crc32_of(payload);
    if (stored != actual) {
        std::ostringstream msg;
        msg << what << ": CRC-32 mismatch (stored 0x" << std::hex << stored << ", computed 0x" << actual
            << "), file is corrupt";
        throw CorruptionError(msg.str());
    }
    ByteReader r(payload, what);
    r.take(magic.size());
    return r;
}

void check_version(std::uint16_t version, std::uint16_t supported, const std::string& what) {
    if (version != supported)
        throw UnsupportedVersionError(what + ": unsupported version " + std::to_string(version) +
                                      " (this build reads version " + std::to_string(supported) + ")");
}

void write_subspace(ByteWriter& w, const AffineSubspace<double>& s) {
    w.u32(static_cast<std::uint32_t>(s.rank()));
    for (Eigen::Index i = 0; i < s.mean.size(); ++i) w.f64(s.mean(i));
    for (Eigen::Index j = 0; j < s.basis.cols(); ++j)
        for (Eigen::Index i = 0; i < s.basis.rows(); ++i) w.f64(s.basis(i, j));
}

AffineSubspace<double> read_subspace(ByteReader& r, Eigen::Index dim, int max_rank) {
    const auto at = r.pos();
    const auto rank = r.u32();
    if (rank > static_cast<std::uint32_t>(max_rank) || rank > dim)
        r.fail("subspace rank " + std::to_string(rank) + " exceeds configured rank", at);
    AffineSubspace<double> s;
    s.mean.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) s.mean(i) = r.f64();
    s.basis.resize(dim, rank);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(rank); ++j)
        for (Eigen::Index i = 0; i < dim; ++i) s.basis(i, j) = r.f64();
    return s;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end && !s.empty();
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_idx_images(const std::filesystem::path& images) {
    const auto bytes = read_file(images);
    ByteReader r(bytes, "IDX images " + images.string());
    if (const auto magic = r.be32(); magic != kIdxImagesMagic) {
        std::ostringstream msg;
        msg << "bad magic 0x" << std::hex << magic << ", expected 0x" << kIdxImagesMagic;
        r.fail(msg.str(), 0);
    }
    const std::size_t n = r.be32();
    const std::size_t rows = r.be32();
    const std::size_t cols = r.be32();
    const std::size_t dim = rows * cols;
    if (r.remaining() < n * dim)
        r.fail("truncated pixel data: header declares " + std::to_string(n) + " images of " +
                   std::to_string(dim) + " bytes but only " + std::to_string(r.remaining()) + " remain",
               r.pos() + r.remaining());
    const auto pixels = r.take(n * dim);

    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n * dim; ++i) data.features.data()[i] = pixels[i] / 255.0;
    return data;
}

std::vector<std::int32_t> load_idx_labels(const std::filesystem::path& labels) {
    const auto bytes = read_file(labels);
    ByteReader r(bytes, "IDX labels " + labels.string());
    if (const auto magic = r.be32(); magic != kIdxLabelsMagic) {
        std::ostringstream msg;
        msg << "bad magic 0x" << std::hex << magic << ", expected 0x" << kIdxLabelsMagic;
        r.fail(msg.str(), 0);
    }
    const std::size_t n = r.be32();
    if (r.remaining() < n)
        r.fail("truncated label data: header declares " + std::to_string(n) + " labels but only " +
                   std::to_string(r.remaining()) + " bytes remain",
               r.pos() + r.remaining());
    const auto raw = r.take(n);
    return {raw.begin(), raw.end()};
}

void attach_labels(Dataset& data, std::vector<std::int32_t> labels) {
    if (labels.size() != static_cast<std::size_t>(data.size()))
        throw ValidationError("label count " + std::to_string(labels.size()) + " does not match " +
                              std::to_string(data.size()) + " data rows");
    int max_label = -1;
    for (auto c : labels) {
        if (c < 0) throw ValidationError("negative label " + std::to_string(c));
        max_label = std::max(max_label, static_cast<int>(c));
    }
    data.num_classes = max_label + 1;
    data.labels = std::move(labels);
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    Dataset data = load_idx_images(images);
    auto l = load_idx_labels(labels);
    if (l.size() != static_cast<std::size_t>(data.size()))
        throw FormatError("IDX count mismatch: " + std::to_string(data.size()) + " images in " +
                              images.string() + " but " + std::to_string(l.size()) + " labels in " +
                              labels.string() + " (label count at byte 4)",
                          4);
    attach_labels(data, std::move(l));
    return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::vector<double> values;
    std::vector<std::int32_t> labels;
    std::size_t width = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (options.header && line_no == 1) continue;
        if (trim(line).empty()) continue;

        std::vector<std::string_view> cells;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (rows == 0) {
            width = cells.size();
            if (options.label_column && *options.label_column >= width)
                throw FormatError(path.string() + ": label column " + std::to_string(*options.label_column) +
                                      " does not exist on line " + std::to_string(line_no),
                                  line_no);
        } else if (cells.size() != width) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " + std::to_string(width),
                              line_no);
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (options.label_column && c == *options.label_column) {
                std::int32_t label;
                if (!parse_number(cells[c], label) || label < 0)
                    throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                                          ": label cell '" + std::string(trim(cells[c])) +
                                          "' is not a non-negative integer",
                                      line_no);
                labels.push_back(label);
            } else {
                double v;
                if (!parse_number(cells[c], v) || !std::isfinite(v))
                    throw FormatError(path.string() + ": line " + std::to_string(line_no) + ", column " +
                                          std::to_string(c) + ": '" + std::string(trim(cells[c])) +
                                          "' is not a finite number",
                                      line_no);
                values.push_back(v);
            }
        }
        ++rows;
    }

    const std::size_t dim = rows == 0 ? 0 : width - (options.label_column ? 1 : 0);
    Dataset data;
    data.features = Eigen::Map<const Features>(values.data(), static_cast<Eigen::Index>(rows),
                                               static_cast<Eigen::Index>(dim));
    if (options.label_column) attach_labels(data, std::move(labels));
    return data;
}

RawDescriptor parse_descriptor(std::string_view text) {
    RawDescriptor d;
    bool have_n = false, have_d = false, have_type = false;
    std::string_view rest = trim(text);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto field = trim(rest.substr(0, comma));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        const auto eq = field.find('=');
        if (eq == std::string_view::npos)
            throw FormatError("descriptor: field '" + std::string(field) + "' is not key=value", 0);
        const auto key = trim(field.substr(0, eq));
        const auto value = trim(field.substr(eq + 1));
        if (key == "N") {
            have_n = parse_number(value, d.rows);
        } else if (key == "D") {
            have_d = parse_number(value, d.cols);
        } else if (key == "dtype") {
            if (value != "f32le") throw FormatError("descriptor: unsupported dtype '" + std::string(value) + "'", 0);
            have_type = true;
        } else {
            throw FormatError("descriptor: unknown key '" + std::string(key) + "'", 0);
        }
    }
    if (!have_n || !have_d || !have_type)
        throw FormatError("descriptor must be of the form N=<rows>,D=<cols>,dtype=f32le", 0);
    return d;
}

Dataset load_raw(const std::filesystem::path& data_path, const std::filesystem::path& descriptor) {
    const auto text = read_file(descriptor);
    const auto d = parse_descriptor(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
    const auto bytes = read_file(data_path);
    const std::size_t expected = d.rows * d.cols * 4;
    if (bytes.size() != expected)
        throw FormatError(data_path.string() + ": expected " + std::to_string(expected) + " bytes (N=" +
                              std::to_string(d.rows) + ", D=" + std::to_string(d.cols) +
                              ", f32le) but file has " + std::to_string(bytes.size()),
                          std::min(bytes.size(), expected));

    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
    for (std::size_t i = 0; i < d.rows * d.cols; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + static_cast<std::size_t>(b)]} << (8 * b);
        const float v = std::bit_cast<float>(bits);
        if (!std::isfinite(v))
            throw FormatError(data_path.string() + ": non-finite value in row " + std::to_string(i / d.cols),
                              4 * i);
        data.features.data()[i] = v;
    }
    return data;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
    const auto& f = model.forest;
    const auto& c = f.config;
    ByteWriter w;
    w.bytes(kModelMagic);
    w.u16(kModelVersion);
    w.u32(static_cast<std::uint32_t>(c.num_trees));
    w.u32(static_cast<std::uint32_t>(c.depth));
    w.u8(static_cast<std::uint8_t>(c.splitter));
    w.u32(static_cast<std::uint32_t>(c.subspace_rank));
    w.f64(c.sample_fraction);
    w.u32(static_cast<std::uint32_t>(c.stump_candidates));
    w.u32(static_cast<std::uint32_t>(c.min_node_samples));
    w.u64(c.master_seed);
    w.u32(static_cast<std::uint32_t>(f.feature_dim));

    if (f.trees.size() != static_cast<std::size_t>(c.num_trees))
        throw ValidationError("serialize_model: forest holds " + std::to_string(f.trees.size()) +
                              " trees, config says " + std::to_string(c.num_trees));
    for (const auto& tree : f.trees) {
        for (const auto& split : tree.splits) {
            if (const auto* s = std::get_if<Stump>(&split)) {
                w.u8(0);
                w.u32(s->feature);
                w.f64(s->threshold);
            } else if (const auto* s = std::get_if<SubspaceSplit>(&split)) {
                w.u8(1);
                write_subspace(w, s->left);
                write_subspace(w, s->right);
            } else {
                w.u8(2);
                w.u8(static_cast<std::uint8_t>(std::get<Passthrough>(split).branch));
            }
        }
    }

    w.u8(model.selection ? 1 : 0);
    if (model.selection) {
        const auto& s = *model.selection;
        w.u8(static_cast<std::uint8_t>(s.method));
        w.u8(s.objective_value ? 1 : 0);
        w.f64(s.objective_value.value_or(0.0));
        w.u32(static_cast<std::uint32_t>(s.indices.size()));
        for (auto i : s.indices) w.u32(i);
    }
    return w.finish();
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
    const std::string what = "model file";
    ByteReader r = open_checked(bytes, kModelMagic, what);
    check_version(r.u16(), kModelVersion, what);

    Model m;
    auto& c = m.forest.config;
    c.num_trees = static_cast<int>(r.u32());
    c.depth = static_cast<int>(r.u32());
    const auto splitter_at = r.pos();
    const auto splitter = r.u8();
    if (splitter > 1) r.fail("unknown splitter " + std::to_string(splitter), splitter_at);
    c.splitter = static_cast<Splitter>(splitter);
    c.subspace_rank = static_cast<int>(r.u32());
    c.sample_fraction = r.f64();
    c.stump_candidates = static_cast<int>(r.u32());
    c.min_node_samples = static_cast<int>(r.u32());
    c.master_seed = r.u64();
    m.forest.feature_dim = r.u32();
    try {
        c.validate(m.forest.feature_dim);
    } catch (const ConfigError& e) {
        r.fail(std::string("invalid forest configuration: ") + e.what(), 6);
    }

    const TreeShape shape(c.depth);
    m.forest.trees.resize(static_cast<std::size_t>(c.num_trees));
    for (auto& tree : m.forest.trees) {
        tree.shape = shape;
        tree.feature_dim = m.forest.feature_dim;
        tree.splits.resize(static_cast<std::size_t>(shape.internal_count()));
        for (auto& split : tree.splits) {
            const auto at = r.pos();
            switch (r.u8()) {
                case 0: {
                    Stump s;
                    s.feature = r.u32();
                    s.threshold = r.f64();
                    if (s.feature >= m.forest.feature_dim) r.fail("stump feature out of range", at);
                    split = s;
                    break;
                }
                case 1: {
                    SubspaceSplit s;
                    s.left = read_subspace(r, m.forest.feature_dim, c.subspace_rank);
                    s.right = read_subspace(r, m.forest.feature_dim, c.subspace_rank);
                    split = std::move(s);
                    break;
                }
                case 2: {
                    const auto b = r.u8();
                    if (b > 1) r.fail("bad passthrough branch", at + 1);
                    split = Passthrough{static_cast<Branch>(b)};
                    break;
                }
                default:
                    r.fail("unknown split tag", at);
            }
        }
    }

    const auto has_selection = r.u8();
    if (has_selection) {
        BlockSelection s;
        const auto method_at = r.pos();
        const auto method = r.u8();
        if (method > 1) r.fail("unknown selection method", method_at);
        s.method = static_cast<SelectionMethod>(method);
        const bool has_objective = r.u8() != 0;
        const double objective = r.f64();
        if (has_objective) s.objective_value = objective;
        const auto k = r.u32();
        std::vector<bool> seen(static_cast<std::size_t>(c.num_trees), false);
        for (std::uint32_t i = 0; i < k; ++i) {
            const auto at = r.pos();
            const auto idx = r.u32();
            if (idx >= static_cast<std::uint32_t>(c.num_trees) || seen[idx])
                r.fail("invalid or duplicate selection index", at);
            seen[idx] = true;
            s.indices.push_back(idx);
        }
        m.selection = std::move(s);
    }
    if (r.remaining() != 0) r.fail("trailing bytes after model", r.pos());
    return m;
}

void save_model(const Model& model, const std::filesystem::path& path) { write_file(path, serialize_model(model)); }

Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::vector<std::uint8_t> serialize_codes(const CodeFile& file) {
    const auto& codes = file.codes;
    if (file.labels && file.labels->size() != codes.rows())
        throw ValidationError("serialize_codes: label count does not match code count");
    ByteWriter w;
    w.bytes(kCodeMagic);
    w.u16(kCodeVersion);
    w.u16(file.labels ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(codes.bits()));
    w.u64(codes.rows());
    std::vector<std::uint8_t> record(packed_size(codes.bits()));
    for (std::size_t i = 0; i < codes.rows(); ++i) {
        pack_bits(codes.row(i), codes.bits(), record);
        w.raw(record);
    }
    if (file.labels)
        for (auto l : *file.labels) w.i32(l);
    return w.finish();
}

CodeFile deserialize_codes(std::span<const std::uint8_t> bytes) {
    const std::string what = "code file";
    ByteReader r = open_checked(bytes, kCodeMagic, what);
    check_version(r.u16(), kCodeVersion, what);
    const auto flags = r.u16();
    if (flags > 1) r.fail("unknown flags", 6);
    const std::size_t bits = r.u32();
    const std::size_t n = r.u64();
    const std::size_t record = packed_size(bits);
    const std::size_t expected = n * record + ((flags & 1) ? 4 * n : 0);
    if (r.remaining() != expected)
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(expected),
               r.pos());

    CodeFile file;
    file.codes = CodeMatrix(bits, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto at = r.pos();
        try {
            unpack_bits(r.take(record), bits, file.codes.row(i));
        } catch (const ValidationError& e) {
            r.fail(std::string("record ") + std::to_string(i) + ": " + e.what(), at);
        }
    }
    if (flags & 1) {
        file.labels.emplace(n);
        for (auto& l : *file.labels) l = r.i32();
    }
    return file;
}

void save_codes(const CodeFile& codes, const std::filesystem::path& path) { write_file(path, serialize_codes(codes)); }

CodeFile load_codes(const std::filesystem::path& path) { return deserialize_codes(read_file(path)); }

bool is_code_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    return in.gcount() == 4 && std::string_view(magic, 4) == kCodeMagic;
}

}  // namespace foresthash::io
