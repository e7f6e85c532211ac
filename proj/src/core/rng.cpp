#include "segicl/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "segicl/errors.hpp"

namespace segicl {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw state_error("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(gen_() % span);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::string Rng::state() const {
    std::ostringstream os;
    os << gen_ << ' ' << has_spare_ << ' ';
    // Round-trips the spare exactly via its bit pattern.
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(spare_));
    std::memcpy(&bits, &spare_, sizeof(bits));
    os << bits;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    std::uint64_t bits = 0;
    if (!(is >> gen_ >> has_spare_ >> bits))
        throw state_error("Rng::set_state: malformed state string");
    std::memcpy(&spare_, &bits, sizeof(bits));
}

std::uint64_t split_seed(std::uint64_t root, std::uint64_t index) {
    std::uint64_t z = root + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace segicl
