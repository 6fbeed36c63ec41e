#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pmri/tensor.hpp"

namespace pmri {

// CTNS tensor files:
//   "CTNS" | u32 version (1) | u32 ndim | ndim x u64 extents | (f64 re, f64 im)*
// all little-endian.

void write_ctns(std::ostream& os, const ComplexTensor& t);
ComplexTensor read_ctns(std::istream& is, const std::string& source = "<stream>");

void save_ctns(const std::filesystem::path& path, const ComplexTensor& t);
ComplexTensor load_ctns(const std::filesystem::path& path);

/// Ordered `key = value` document. Blank lines and `#` comments are skipped on
/// read; duplicate keys keep the last value.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& is, const std::string& source = "<stream>");
    static KeyValueFile load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path, const std::string& header_comment = "") const;

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return index_.count(key) != 0; }
    /// Throws FormatError naming the key when missing.
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
    std::string source_;
};

/// "3x3x4x32" <-> {3, 3, 4, 32}
std::string format_shape(const Shape& s);
Shape parse_shape(const std::string& text);

}  // namespace pmri
