#pragma once

// The library is compiled twice: single precision for training and inference,
// double precision for finite-difference gradient checks. Each build lives in
// its own inline namespace so both can be linked into one binary.

#ifdef DSF_DOUBLE_PRECISION
#define DSF_PREC f64
#else
#define DSF_PREC f32
#endif

namespace dsf::inline DSF_PREC {

#ifdef DSF_DOUBLE_PRECISION
using Real = double;
#else
using Real = float;
#endif

}  // namespace dsf::inline DSF_PREC
