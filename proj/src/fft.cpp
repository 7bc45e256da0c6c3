#include "fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <utility>

#include "rppg/error.hpp"

namespace rppg::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

Fft::Fft(std::size_t n) : n_(n) {
    if (n == 0) throw Error(ErrorCode::configuration, "FFT size must be positive");
    std::vector<cplx> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(planner_mutex());
    forward_plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, flags);
    inverse_plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, flags);
}

Fft::~Fft() {
    if (forward_plan_ == nullptr && inverse_plan_ == nullptr) return;
    std::lock_guard lock(planner_mutex());
    if (forward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
    if (inverse_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

Fft::Fft(Fft&& other) noexcept
    : n_(other.n_),
      forward_plan_(std::exchange(other.forward_plan_, nullptr)),
      inverse_plan_(std::exchange(other.inverse_plan_, nullptr)) {}

Fft& Fft::operator=(Fft&& other) noexcept {
    if (this != &other) {
        std::swap(n_, other.n_);
        std::swap(forward_plan_, other.forward_plan_);
        std::swap(inverse_plan_, other.inverse_plan_);
    }
    return *this;
}

void Fft::forward(std::vector<cplx>& data) const {
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), buf, buf);
}

void Fft::inverse(std::vector<cplx>& data) const {
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(static_cast<fftw_plan>(inverse_plan_), buf, buf);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace rppg::detail
