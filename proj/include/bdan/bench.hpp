#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bdan {

/// Median wall times of the two Lambda paths on one random (e, n, t) operand pair.
struct LambdaTiming {
    std::size_t e = 0, n = 0, t = 0;
    double naive_ms = 0;
    double fast_ms = 0;
    double naive_value = 0;
    double fast_value = 0;
    double abs_diff = 0;

    double ratio() const { return fast_ms > 0 ? naive_ms / fast_ms : 0; }
};

/// Operands are (e, n, t) and its own expanded view, so both paths compute Lambda(A, A).
/// The canonical size (2, 1, 1) uses A = [[1], [3]] instead of random data.
LambdaTiming time_lambda_paths(std::size_t e, std::size_t n, std::size_t t, std::size_t reps, std::uint64_t seed);

std::string lambda_timing_csv(const std::vector<LambdaTiming>& rows);

}  // namespace bdan
