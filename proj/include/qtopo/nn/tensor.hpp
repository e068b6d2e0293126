#pragma once

#include <cstddef>
#include <new>
#include <string>
#include <vector>

namespace qtopo::nn {

// Eigen picks its vector peeling from the runtime address of a buffer, so
// every numeric buffer starts on a 64-byte boundary to keep sums bitwise
// reproducible across allocations.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

// Per-sample shape (depth, height, width, channels).
struct Shape {
    int d = 1, h = 1, w = 1, c = 1;

    std::size_t size() const { return static_cast<std::size_t>(d) * h * w * c; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// A batch of n samples stored as [n][d][h][w][c].
struct Tensor {
    int n = 0;
    Shape shape;
    Buffer data;

    Tensor() = default;
    Tensor(int batch, Shape s) : n(batch), shape(s), data(static_cast<std::size_t>(batch) * s.size(), 0.0) {}

    std::size_t index(int b, int z, int y, int x, int ch) const {
        return (((static_cast<std::size_t>(b) * shape.d + z) * shape.h + y) * shape.w + x) * shape.c + ch;
    }
    double& at(int b, int z, int y, int x, int ch) { return data[index(b, z, y, x, ch)]; }
    double at(int b, int z, int y, int x, int ch) const { return data[index(b, z, y, x, ch)]; }
    double* sample(int b) { return data.data() + static_cast<std::size_t>(b) * shape.size(); }
    const double* sample(int b) const { return data.data() + static_cast<std::size_t>(b) * shape.size(); }
    bool all_finite() const;
};

// Wrap-around padding of ph rows and pw columns after the last ones, so
// row H equals row 0.
Tensor periodic_pad(const Tensor& x, int ph, int pw);

}  // namespace qtopo::nn
