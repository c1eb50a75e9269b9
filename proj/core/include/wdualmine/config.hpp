#pragma once

namespace wdualmine {

// Scalar type of the tensor engine. The default build trains in 32-bit
// floats; defining WDUALMINE_REAL64 switches the whole engine to doubles,
// which exists only so finite-difference gradient checks can run at tight
// tolerances. Checkpoints are stored as 32-bit floats in either build.
#ifdef WDUALMINE_REAL64
using real = double;
#else
using real = float;
#endif

inline constexpr int kCheckpointVersion = 1;

}  // namespace wdualmine
