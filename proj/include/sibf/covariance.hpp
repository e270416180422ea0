#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sibf/hermitian.hpp"

namespace sibf {

// Fixed-capacity FIFO. Index 0 is the oldest element; lag(0) the newest.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 1) : data_(capacity) {
    if (capacity == 0) throw std::invalid_argument("RingBuffer: zero capacity");
  }

  // Appends and returns the evicted element when the buffer was full.
  std::optional<T> push(T value) {
    std::optional<T> evicted;
    if (size_ == data_.size()) {
      evicted = std::move(data_[head_]);
      data_[head_] = std::move(value);
      head_ = (head_ + 1) % data_.size();
    } else {
      data_[(head_ + size_) % data_.size()] = std::move(value);
      ++size_;
    }
    return evicted;
  }

  const T& operator[](std::size_t i) const { return data_[(head_ + i) % data_.size()]; }
  T& operator[](std::size_t i) { return data_[(head_ + i) % data_.size()]; }
  // Element tau frames before the newest.
  const T& lag(std::size_t tau) const { return (*this)[size_ - 1 - tau]; }
  T& lag(std::size_t tau) { return (*this)[size_ - 1 - tau]; }
  const T& oldest() const { return (*this)[0]; }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return data_.size(); }
  bool full() const { return size_ == data_.size(); }
  bool empty() const { return size_ == 0; }

 private:
  std::vector<T> data_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

struct Batch {};
struct WindowedBatch {
  int window = 312;
  double forgetting = 0.99;
};
struct FifoOnline {
  int window = 312;
  double forgetting = 0.99;
};
// `window` is used only for the initial windowed estimate.
struct RlsOnline {
  int window = 125;
  double forgetting = 0.99;
};

using AlgorithmMode = std::variant<Batch, WindowedBatch, FifoOnline, RlsOnline>;

const char* mode_name(const AlgorithmMode& mode);
void validate_mode(const AlgorithmMode& mode);
bool is_per_frame(const AlgorithmMode& mode);
int mode_window(const AlgorithmMode& mode);
double mode_forgetting(const AlgorithmMode& mode);

// acc += weight * x x^H on both triangles, without a general product kernel.
void add_weighted_outer(CMatrix& acc, const CVector& x, double weight);

// (1/T) sum_t c(t) x(t) x(t)^H over the columns of an N x T block. An empty
// weight span means c = 1.
HermitianMatrix batch_covariance(const ComplexMatrix& x_bin, std::span<const double> c = {});

// (1-g) sum_tau g^tau c(t-tau) x(t-tau) x(t-tau)^H with `frames` ordered
// oldest first (the newest frame has tau = 0).
HermitianMatrix windowed_covariance(std::span<const CVector> frames, std::span<const double> c,
                                    double g);

// g Phi(t-1) + (1-g) {c_new x_new x_new^H - g^Tb c_old x_old x_old^H}
HermitianMatrix fifo_update(const HermitianMatrix& prev, const CVector& x_new, double c_new,
                            const CVector& x_old, double c_old, double g, int window);

// g Phi(t-1) + (1-g) c x x^H
HermitianMatrix rls_update(const HermitianMatrix& prev, const CVector& x, double c, double g);

inline constexpr double kVrefFloor = 1e-20;

// (1-g) sum_tau g^tau r(-tau)^2, `r` oldest first.
double init_v_ref(std::span<const double> r, double g);
double update_v_ref(double prev, double r, double g);
double update_v_ref_fifo(double prev, double r_new, double r_old, double g, int window);

// (1-g) sum_tau g^tau x(-tau) conj(q(-tau)), oldest first.
CVector init_phi_q(std::span<const CVector> frames, std::span<const Complex> q, double g);
CVector update_phi_q(const CVector& prev, const CVector& x, Complex q, double g);
CVector update_phi_q_fifo(const CVector& prev, const CVector& x_new, Complex q_new,
                          const CVector& x_old, Complex q_old, double g, int window);

// Sliding-window covariance maintained by fifo_update. Must be filled to
// capacity before fifo_push is used.
class FifoCovariance {
 public:
  FifoCovariance(int channels, int window, double forgetting);

  // Initial fill; recomputes Phi directly once the window is full.
  void prime(const CVector& x, double c);
  // One FIFO step. Throws std::logic_error when the window is underfull.
  const HermitianMatrix& fifo_push(const CVector& x, double c);

  const HermitianMatrix& phi() const { return phi_; }
  bool full() const { return frames_.full(); }

 private:
  struct Entry {
    CVector x;
    double c = 0.0;
  };
  RingBuffer<Entry> frames_;
  double g_;
  int window_;
  HermitianMatrix phi_;
};

}  // namespace sibf
