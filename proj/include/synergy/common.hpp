#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace synergy {

// Flat row-major tensor. Shape is metadata only; all kernels index manually.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    void resize(std::vector<int64_t> s) {
        shape = std::move(s);
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }
};

// Runtime switch between the OpenMP kernels and the serial reference path.
// Serial mode is the determinism contract used by the tests; the parallel
// kernels are written so that every output element is produced by exactly
// one thread with the same inner summation order, so results match bitwise.
void set_parallel(bool on);
bool parallel_enabled();

struct SynergyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace synergy
