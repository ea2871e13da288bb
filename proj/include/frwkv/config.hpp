#pragma once

// The library is compiled twice: once with float (training, CLI) and once
// with double (finite-difference verification). Each build lives in its own
// inline namespace so both can be linked into one binary.

#if defined(FRWKV_DOUBLE) && FRWKV_DOUBLE
#define FRWKV_PRECISION_NS f64
#else
#define FRWKV_PRECISION_NS f32
#endif

#define FRWKV_BEGIN_NAMESPACE \
  namespace frwkv {           \
  inline namespace FRWKV_PRECISION_NS {
#define FRWKV_END_NAMESPACE \
  }                         \
  }

FRWKV_BEGIN_NAMESPACE

#if defined(FRWKV_DOUBLE) && FRWKV_DOUBLE
using Real = double;
#else
using Real = float;
#endif

inline constexpr const char* kPrecisionName = sizeof(Real) == 8 ? "f64" : "f32";

FRWKV_END_NAMESPACE
