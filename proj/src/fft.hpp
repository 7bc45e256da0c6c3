#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace rppg::detail {

using cplx = std::complex<double>;

/// In-place capable complex DFT of a fixed size backed by an FFTW plan.
/// Plans are created under a process-wide lock; execution is reentrant.
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&& other) noexcept;
    Fft& operator=(Fft&& other) noexcept;

    std::size_t size() const { return n_; }

    /// Unnormalized forward transform (exp(-i...)).
    void forward(std::vector<cplx>& data) const;
    /// Unnormalized inverse transform; callers divide by size().
    void inverse(std::vector<cplx>& data) const;

private:
    std::size_t n_ = 0;
    void* forward_plan_ = nullptr;
    void* inverse_plan_ = nullptr;
};

std::size_t next_pow2(std::size_t n);

}  // namespace rppg::detail
