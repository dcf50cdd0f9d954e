#pragma once

#include <Eigen/Core>

namespace promptlens {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using MaskXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Text embedding as returned by an embedding provider.
using Embedding = VectorXd;

}  // namespace promptlens
