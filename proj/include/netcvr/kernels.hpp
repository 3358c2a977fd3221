#pragma once

#include <cmath>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense-layer, batch-norm and activation kernels for the tower math.
// Each parallel loop writes disjoint output slots and accumulates serially
// within a slot, so results are bit-identical to the serial reference for
// any thread count. The reference lives in kernels::serial and backs the
// equivalence tests and the benchmark.
namespace netcvr::kernels {

namespace serial {

// Y[b,o] = sum_i X[b,i] * W[o,i] + bias[o]
template <class T>
void dense_forward(const T* X, const T* W, const T* bias, T* Y, int B, int in, int out) {
  for (int b = 0; b < B; ++b) {
    const T* x = X + static_cast<std::size_t>(b) * in;
    T* y = Y + static_cast<std::size_t>(b) * out;
    for (int o = 0; o < out; ++o) {
      const T* w = W + static_cast<std::size_t>(o) * in;
      T acc = bias ? bias[o] : T(0);
      for (int i = 0; i < in; ++i) acc += x[i] * w[i];
      y[o] = acc;
    }
  }
}

// dX[b,i] = sum_o dY[b,o] * W[o,i]
template <class T>
void dense_backward_data(const T* dY, const T* W, T* dX, int B, int in, int out) {
  for (int b = 0; b < B; ++b) {
    const T* dy = dY + static_cast<std::size_t>(b) * out;
    T* dx = dX + static_cast<std::size_t>(b) * in;
    for (int i = 0; i < in; ++i) dx[i] = T(0);
    for (int o = 0; o < out; ++o) {
      const T g = dy[o];
      if (g == T(0)) continue;
      const T* w = W + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) dx[i] += g * w[i];
    }
  }
}

// dW[o,i] += sum_b dY[b,o] * X[b,i];  dbias[o] += sum_b dY[b,o]
template <class T>
void dense_backward_weights(const T* X, const T* dY, T* dW, T* dbias, int B, int in, int out) {
  for (int o = 0; o < out; ++o) {
    T* dw = dW + static_cast<std::size_t>(o) * in;
    T db = T(0);
    for (int b = 0; b < B; ++b) {
      const T g = dY[static_cast<std::size_t>(b) * out + o];
      db += g;
      if (g == T(0)) continue;
      const T* x = X + static_cast<std::size_t>(b) * in;
      for (int i = 0; i < in; ++i) dw[i] += g * x[i];
    }
    if (dbias) dbias[o] += db;
  }
}

template <class T>
void leaky_relu_forward(const T* X, T* Y, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) Y[i] = X[i] > T(0) ? X[i] : slope * X[i];
}

template <class T>
void leaky_relu_backward(const T* X, const T* dY, T* dX, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) dX[i] = X[i] > T(0) ? dY[i] : slope * dY[i];
}

// Batch statistics (biased variance), normalization, and the cache needed
// for the backward pass. X and Y are B x H row-major.
template <class T>
void bn_forward_train(const T* X, T* Y, T* mean, T* inv_std, T* xhat, const T* gamma,
                      const T* beta, int B, int H, T eps) {
  for (int h = 0; h < H; ++h) {
    T m = T(0);
    for (int b = 0; b < B; ++b) m += X[static_cast<std::size_t>(b) * H + h];
    m /= T(B);
    T v = T(0);
    for (int b = 0; b < B; ++b) {
      T d = X[static_cast<std::size_t>(b) * H + h] - m;
      v += d * d;
    }
    v /= T(B);
    const T is = T(1) / std::sqrt(v + eps);
    mean[h] = m;
    inv_std[h] = is;
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      xhat[at] = (X[at] - m) * is;
      Y[at] = gamma[h] * xhat[at] + beta[h];
    }
  }
}

template <class T>
void bn_forward_eval(const T* X, T* Y, const T* rmean, const T* rvar, const T* gamma,
                     const T* beta, int B, int H, T eps) {
  for (int b = 0; b < B; ++b) {
    const T* x = X + static_cast<std::size_t>(b) * H;
    T* y = Y + static_cast<std::size_t>(b) * H;
    for (int h = 0; h < H; ++h)
      y[h] = gamma[h] * (x[h] - rmean[h]) / std::sqrt(rvar[h] + eps) + beta[h];
  }
}

template <class T>
void bn_backward_train(const T* dY, const T* xhat, const T* inv_std, const T* gamma, T* dX,
                       T* dgamma, T* dbeta, int B, int H) {
  for (int h = 0; h < H; ++h) {
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      sum_dy += dY[at];
      sum_dy_xhat += dY[at] * xhat[at];
    }
    dgamma[h] += sum_dy_xhat;
    dbeta[h] += sum_dy;
    const T k = gamma[h] * inv_std[h];
    const T mean_dy = sum_dy / T(B);
    const T mean_dy_xhat = sum_dy_xhat / T(B);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      dX[at] = k * (dY[at] - mean_dy - xhat[at] * mean_dy_xhat);
    }
  }
}

// Normalize with running statistics but keep xhat for the backward pass
// (train-mode forward of a batch below the batch-stats threshold).
template <class T>
void bn_forward_frozen(const T* X, T* Y, T* xhat, const T* rmean, const T* rvar, const T* gamma,
                       const T* beta, int B, int H, T eps) {
  for (int b = 0; b < B; ++b) {
    const std::size_t row = static_cast<std::size_t>(b) * H;
    for (int h = 0; h < H; ++h) {
      const T is = T(1) / std::sqrt(rvar[h] + eps);
      xhat[row + h] = (X[row + h] - rmean[h]) * is;
      Y[row + h] = gamma[h] * xhat[row + h] + beta[h];
    }
  }
}

// Small-batch path: running statistics were used in the forward pass, so
// mean/var are constants and the gradient is a plain affine chain.
template <class T>
void bn_backward_eval_stats(const T* dY, const T* xhat, const T* rvar, const T* gamma, T* dX,
                            T* dgamma, T* dbeta, int B, int H, T eps) {
  for (int h = 0; h < H; ++h) {
    const T is = T(1) / std::sqrt(rvar[h] + eps);
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      sum_dy += dY[at];
      sum_dy_xhat += dY[at] * xhat[at];
      dX[at] = gamma[h] * is * dY[at];
    }
    dgamma[h] += sum_dy_xhat;
    dbeta[h] += sum_dy;
  }
}

}  // namespace serial

template <class T>
void dense_forward(const T* X, const T* W, const T* bias, T* Y, int B, int in, int out) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    serial::dense_forward(X + static_cast<std::size_t>(b) * in, W, bias,
                          Y + static_cast<std::size_t>(b) * out, 1, in, out);
}

template <class T>
void dense_backward_data(const T* dY, const T* W, T* dX, int B, int in, int out) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    serial::dense_backward_data(dY + static_cast<std::size_t>(b) * out, W,
                                dX + static_cast<std::size_t>(b) * in, 1, in, out);
}

template <class T>
void dense_backward_weights(const T* X, const T* dY, T* dW, T* dbias, int B, int in, int out) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    T* dw = dW + static_cast<std::size_t>(o) * in;
    T db = T(0);
    for (int b = 0; b < B; ++b) {
      const T g = dY[static_cast<std::size_t>(b) * out + o];
      db += g;
      if (g == T(0)) continue;
      const T* x = X + static_cast<std::size_t>(b) * in;
      for (int i = 0; i < in; ++i) dw[i] += g * x[i];
    }
    if (dbias) dbias[o] += db;
  }
}

template <class T>
void leaky_relu_forward(const T* X, T* Y, std::size_t n, T slope) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    Y[i] = X[i] > T(0) ? X[i] : slope * X[i];
}

template <class T>
void leaky_relu_backward(const T* X, const T* dY, T* dX, std::size_t n, T slope) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    dX[i] = X[i] > T(0) ? dY[i] : slope * dY[i];
}

template <class T>
void bn_forward_train(const T* X, T* Y, T* mean, T* inv_std, T* xhat, const T* gamma,
                      const T* beta, int B, int H, T eps) {
#pragma omp parallel for schedule(static)
  for (int h = 0; h < H; ++h) {
    T m = T(0);
    for (int b = 0; b < B; ++b) m += X[static_cast<std::size_t>(b) * H + h];
    m /= T(B);
    T v = T(0);
    for (int b = 0; b < B; ++b) {
      T d = X[static_cast<std::size_t>(b) * H + h] - m;
      v += d * d;
    }
    v /= T(B);
    const T is = T(1) / std::sqrt(v + eps);
    mean[h] = m;
    inv_std[h] = is;
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      xhat[at] = (X[at] - m) * is;
      Y[at] = gamma[h] * xhat[at] + beta[h];
    }
  }
}

template <class T>
void bn_forward_eval(const T* X, T* Y, const T* rmean, const T* rvar, const T* gamma,
                     const T* beta, int B, int H, T eps) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    serial::bn_forward_eval(X + static_cast<std::size_t>(b) * H, Y + static_cast<std::size_t>(b) * H,
                            rmean, rvar, gamma, beta, 1, H, eps);
}

template <class T>
void bn_backward_train(const T* dY, const T* xhat, const T* inv_std, const T* gamma, T* dX,
                       T* dgamma, T* dbeta, int B, int H) {
#pragma omp parallel for schedule(static)
  for (int h = 0; h < H; ++h) {
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      sum_dy += dY[at];
      sum_dy_xhat += dY[at] * xhat[at];
    }
    dgamma[h] += sum_dy_xhat;
    dbeta[h] += sum_dy;
    const T k = gamma[h] * inv_std[h];
    const T mean_dy = sum_dy / T(B);
    const T mean_dy_xhat = sum_dy_xhat / T(B);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      dX[at] = k * (dY[at] - mean_dy - xhat[at] * mean_dy_xhat);
    }
  }
}

template <class T>
void bn_forward_frozen(const T* X, T* Y, T* xhat, const T* rmean, const T* rvar, const T* gamma,
                       const T* beta, int B, int H, T eps) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    serial::bn_forward_frozen(X + static_cast<std::size_t>(b) * H, Y + static_cast<std::size_t>(b) * H,
                              xhat + static_cast<std::size_t>(b) * H, rmean, rvar, gamma, beta, 1, H,
                              eps);
}

template <class T>
void bn_backward_eval_stats(const T* dY, const T* xhat, const T* rvar, const T* gamma, T* dX,
                            T* dgamma, T* dbeta, int B, int H, T eps) {
#pragma omp parallel for schedule(static)
  for (int h = 0; h < H; ++h) {
    const T is = T(1) / std::sqrt(rvar[h] + eps);
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int b = 0; b < B; ++b) {
      const std::size_t at = static_cast<std::size_t>(b) * H + h;
      sum_dy += dY[at];
      sum_dy_xhat += dY[at] * xhat[at];
      dX[at] = gamma[h] * is * dY[at];
    }
    dgamma[h] += sum_dy_xhat;
    dbeta[h] += sum_dy;
  }
}

}  // namespace netcvr::kernels
