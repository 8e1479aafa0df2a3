#pragma once

// Pull in all of torch first: c10's logging shim defines glog-style CHECK
// macros unconditionally and would otherwise shadow doctest's assertions.
#include <torch/torch.h>

#ifdef CHECK
#undef CHECK
#endif
#ifdef CHECK_EQ
#undef CHECK_EQ
#endif
#ifdef CHECK_NE
#undef CHECK_NE
#endif
#ifdef CHECK_LE
#undef CHECK_LE
#endif
#ifdef CHECK_LT
#undef CHECK_LT
#endif
#ifdef CHECK_GE
#undef CHECK_GE
#endif
#ifdef CHECK_GT
#undef CHECK_GT
#endif

#include <doctest.h>
