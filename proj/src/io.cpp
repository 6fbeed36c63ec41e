#include "pmri/io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pmri {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'T', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::ostream& os, U v) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class Reader {
public:
    Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

    template <class U>
    U le(const char* what) {
        unsigned char bytes[sizeof(U)];
        read(bytes, sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
        return v;
    }

    void read(void* dst, std::size_t n, const char* what) {
        is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(is_.gcount());
        if (got != n)
            throw FormatError(source_ + ": truncated " + what + " at offset " + std::to_string(offset_ + got) +
                              " (needed " + std::to_string(n) + " bytes, got " + std::to_string(got) + ")");
        offset_ += n;
    }

    std::size_t offset() const { return offset_; }
    const std::string& source() const { return source_; }

private:
    std::istream& is_;
    std::string source_;
    std::size_t offset_ = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void write_ctns(std::ostream& os, const ComplexTensor& t) {
    os.write(kMagic.data(), 4);
    put_le<std::uint32_t>(os, kVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint64_t>(os, e);
    for (const auto& v : t.values()) {
        put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v.real()));
        put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v.imag()));
    }
}

ComplexTensor read_ctns(std::istream& is, const std::string& source) {
    Reader r(is, source);
    std::array<char, 4> magic{};
    r.read(magic.data(), 4, "magic");
    if (magic != kMagic) throw FormatError(source + ": bad magic at offset 0 (not a CTNS file)");
    const auto version = r.le<std::uint32_t>("version");
    if (version != kVersion)
        throw FormatError(source + ": unsupported CTNS version " + std::to_string(version) + " at offset 4");
    const auto ndim = r.le<std::uint32_t>("rank");
    if (ndim > 16) throw FormatError(source + ": implausible rank " + std::to_string(ndim) + " at offset 8");
    Shape shape(ndim);
    for (auto& e : shape) e = r.le<std::uint64_t>("extent");
    std::size_t count = 1;
    for (auto e : shape) {
        if (e != 0 && count > (std::size_t{1} << 40) / e)
            throw FormatError(source + ": implausible extents " + shape_str(shape));
        count *= e;
    }
    std::vector<cplx> data(count);
    for (auto& v : data) {
        const double re = std::bit_cast<double>(r.le<std::uint64_t>("payload"));
        const double im = std::bit_cast<double>(r.le<std::uint64_t>("payload"));
        v = cplx(re, im);
    }
    return ComplexTensor(std::move(shape), std::move(data));
}

void save_ctns(const std::filesystem::path& path, const ComplexTensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    write_ctns(os, t);
    if (!os) throw FormatError("write failed: " + path.string());
}

ComplexTensor load_ctns(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_ctns(is, path.string());
}

KeyValueFile KeyValueFile::parse(std::istream& is, const std::string& source) {
    KeyValueFile kv;
    kv.source_ = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw FormatError(source + ":" + std::to_string(lineno) + ": empty key");
        kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    return parse(is, path.string());
}

void KeyValueFile::save(const std::filesystem::path& path, const std::string& header_comment) const {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    if (!header_comment.empty()) os << "# " << header_comment << '\n';
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    if (!os) throw FormatError("write failed: " + path.string());
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
    if (auto it = index_.find(key); it != index_.end()) {
        entries_[it->second].second = value;
        return;
    }
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
}

const std::string& KeyValueFile::get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw FormatError(source_ + ": missing key '" + key + "'");
    return entries_[it->second].second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

double KeyValueFile::get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw FormatError(source_ + ": key '" + key + "' is not a number: '" + v + "'");
    }
}

std::size_t KeyValueFile::get_size(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const auto n = std::stoull(v, &used);
        if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw FormatError(source_ + ": key '" + key + "' is not a nonnegative integer: '" + v + "'");
    }
}

std::string format_shape(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

Shape parse_shape(const std::string& text) {
    Shape s;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            s.push_back(static_cast<std::size_t>(std::stoull(trim(part))));
        } catch (const std::exception&) {
            throw FormatError("bad shape '" + text + "'");
        }
    }
    if (s.empty()) throw FormatError("bad shape '" + text + "'");
    return s;
}

}  // namespace pmri
