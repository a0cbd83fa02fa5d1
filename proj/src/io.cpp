#include "natsr/io.hpp"

#include "natsr/error.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

namespace natsr {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes);
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_value_block(std::ostream& os, std::string_view tag, std::uint64_t hash, std::span<const double> values) {
    os << tag << " 1\n";
    os << "hash " << hex64(hash) << "\n";
    os << "count " << values.size() << "\n";
    char buf[40];
    for (double v : values) {
        std::snprintf(buf, sizeof buf, "%a", v);
        os << buf << "\n";
    }
}

std::vector<double> read_value_block(std::istream& is, std::string_view tag, std::uint64_t expected_hash) {
    std::string word;
    int version = 0;
    if (!(is >> word >> version) || word != tag || version != 1) {
        throw InputError("value block: expected header '" + std::string(tag) + " 1'");
    }
    std::string hash_text;
    if (!(is >> word >> hash_text) || word != "hash") {
        throw InputError("value block: missing hash line");
    }
    if (hash_text != hex64(expected_hash)) {
        throw InputError("value block: hash " + hash_text + " does not match expected " + hex64(expected_hash));
    }
    std::size_t count = 0;
    if (!(is >> word >> count) || word != "count") {
        throw InputError("value block: missing count line");
    }
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string tok;
        if (!(is >> tok)) {
            throw InputError("value block: truncated after " + std::to_string(i) + " values");
        }
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
            throw InputError("value block: bad value '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

} // namespace natsr
