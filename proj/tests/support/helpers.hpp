#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "segicl/rng.hpp"
#include "segicl/tensor.hpp"

namespace segicl::testsupport {

// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("segicl_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

// Asserts that `fn` throws E and that the message mentions every fragment.
template <typename E, typename Fn>
void check_throws_mentioning(Fn&& fn, const std::vector<std::string>& fragments) {
    bool threw = false;
    try {
        fn();
    } catch (const E& e) {
        threw = true;
        const std::string msg = e.what();
        for (const auto& frag : fragments) {
            INFO("message: " << msg << " fragment: " << frag);
            CHECK(msg.find(frag) != std::string::npos);
        }
    }
    CHECK(threw);
}

template <typename T>
double max_abs_diff(const TensorBase<T>& a, const std::vector<double>& b) {
    REQUIRE(a.numel() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double d = std::abs(static_cast<double>((*a.data)[i]) - b[i]);
        worst = std::max(worst, d);
    }
    return worst;
}

template <typename T>
std::vector<double> to_doubles(const TensorBase<T>& t) {
    return std::vector<double>(t.data->begin(), t.data->end());
}

template <typename T>
TensorBase<T> random_tensor(Rng& rng, std::vector<int> shape, T scale = T(1),
                            bool requires_grad = false) {
    auto t = zeros<T>(std::move(shape), requires_grad);
    for (auto& v : *t.data) v = static_cast<T>(rng.normal()) * scale;
    return t;
}

}  // namespace segicl::testsupport
