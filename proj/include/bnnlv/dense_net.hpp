#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bnnlv/rng.hpp"

namespace bnnlv::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Fully connected network with rectifier hidden units and an affine output
// layer. layer_sizes = {input, hidden_1, ..., hidden_{L-1}, output}; a
// two-entry list is a bare affine map (no hidden layer), which the model
// types reject but the kernel supports.
//
// Flat parameter order: layers first to last; within a layer, row-major over
// the V_l x (V_{l-1}+1) matrix [W | b] with the bias as the trailing column.
class DenseNet {
 public:
  explicit DenseNet(std::vector<int> layer_sizes);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_affine_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int num_hidden_layers() const { return num_affine_layers() - 1; }
  int param_count() const { return param_count_; }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  // Offset of layer l's [W | b] block inside the flat parameter vector.
  int layer_offset(int l) const { return offsets_[l]; }
  int layer_rows(int l) const { return sizes_[l + 1]; }
  int layer_cols(int l) const { return sizes_[l] + 1; }

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int param_count_ = 0;
};

void check_params(const DenseNet& net, const VectorXd& params);

VectorXd forward(const DenseNet& net, const VectorXd& params, const VectorXd& input);

// Column-batched evaluation: inputs is (input_size x B), result (output_size x B).
MatrixXd forward_batch(const DenseNet& net, const VectorXd& params, const MatrixXd& inputs);

// Gaussian-initialized parameter vector with the given standard deviation.
VectorXd random_params(const DenseNet& net, double stddev, RngStream& rng);

}  // namespace bnnlv::nn
