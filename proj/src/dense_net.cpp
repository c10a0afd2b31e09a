#include "bnnlv/dense_net.hpp"

#include <stdexcept>
#include <string>

namespace bnnlv::nn {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

DenseNet::DenseNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("DenseNet: need at least input and output sizes");
  }
  for (int s : sizes_) {
    if (s < 1) throw std::invalid_argument("DenseNet: all layer sizes must be >= 1");
  }
  offsets_.resize(sizes_.size() - 1);
  for (int l = 0; l < num_affine_layers(); ++l) {
    offsets_[l] = param_count_;
    param_count_ += sizes_[l + 1] * (sizes_[l] + 1);
  }
}

void check_params(const DenseNet& net, const VectorXd& params) {
  if (params.size() != net.param_count()) {
    throw std::invalid_argument("parameter vector has length " + std::to_string(params.size()) +
                                ", network needs " + std::to_string(net.param_count()));
  }
  if (!params.allFinite()) {
    throw std::invalid_argument("parameter vector contains non-finite entries");
  }
}

VectorXd forward(const DenseNet& net, const VectorXd& params, const VectorXd& input) {
  return forward_batch(net, params, input);
}

MatrixXd forward_batch(const DenseNet& net, const VectorXd& params, const MatrixXd& inputs) {
  check_params(net, params);
  if (inputs.rows() != net.input_size()) {
    throw std::invalid_argument("input has " + std::to_string(inputs.rows()) +
                                " rows, network expects " + std::to_string(net.input_size()));
  }
  MatrixXd h = inputs;
  const int layers = net.num_affine_layers();
  for (int l = 0; l < layers; ++l) {
    RowMajorMap wb(params.data() + net.layer_offset(l), net.layer_rows(l), net.layer_cols(l));
    MatrixXd next = wb.leftCols(net.layer_cols(l) - 1) * h;
    next.colwise() += wb.col(net.layer_cols(l) - 1);
    if (l + 1 < layers) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

VectorXd random_params(const DenseNet& net, double stddev, RngStream& rng) {
  VectorXd p(net.param_count());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = stddev * rng.normal();
  return p;
}

}  // namespace bnnlv::nn
