#include "segicl/util.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "segicl/errors.hpp"

namespace segicl {

namespace fs = std::filesystem;

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("hash_file: cannot open " + path);
    std::uint64_t h = kFnvOffset;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
        if (in.eof()) break;
    }
    return h;
}

std::uint64_t hash_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error("hash_dir: not a directory: " + dir);
    std::vector<std::string> rel;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file())
            rel.push_back(fs::relative(e.path(), dir).generic_string());
    }
    std::sort(rel.begin(), rel.end());
    std::uint64_t h = kFnvOffset;
    for (const auto& r : rel) {
        h = fnv1a64(r, h);
        std::uint64_t fh = hash_file((fs::path(dir) / r).string());
        h = fnv1a64(&fh, sizeof(fh), h);
    }
    return h;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("write_text_file: cannot open " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("write_text_file: short write to " + path);
}

}  // namespace segicl
