#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace c4av {

// Dense row-major tensor of doubles. Shape is informational; all kernels
// index flat storage.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), 0.0);
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

struct Parameter {
    std::string name;
    Tensor value;
    int index = -1;  // slot in the owning model's parameter list / GradBuffer
};

// One gradient slot per model parameter, in parameter order. Threads
// accumulate into private buffers which are then reduced in index order.
using GradBuffer = std::vector<Tensor>;

inline GradBuffer make_grad_buffer(const std::vector<Parameter*>& params) {
    GradBuffer g;
    g.reserve(params.size());
    for (const Parameter* p : params) g.emplace_back(p->value.shape);
    return g;
}

inline void add_grad_buffers(GradBuffer& into, const GradBuffer& from) {
    assert(into.size() == from.size());
    for (std::size_t i = 0; i < into.size(); ++i)
        for (std::size_t j = 0; j < into[i].size(); ++j) into[i].data[j] += from[i].data[j];
}

}  // namespace c4av
