#ifndef SLMW_NUMERIC_HPP
#define SLMW_NUMERIC_HPP

#include "slmw/numeric/ops.hpp"
#include "slmw/numeric/tensor.hpp"

namespace slmw::numeric {

using Tensor = BasicTensor<double>;
using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;

}  // namespace slmw::numeric

#endif  // SLMW_NUMERIC_HPP
