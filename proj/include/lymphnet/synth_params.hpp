#ifndef LYMPHNET_SYNTH_PARAMS_HPP
#define LYMPHNET_SYNTH_PARAMS_HPP

// Versioned parameter table for the synthetic corpus generator. The table is
// immutable once a version has shipped: recorded end-to-end accuracy values
// depend on every number below, so any change must bump kTableVersion and
// re-record them.

namespace lymphnet::synth {

inline constexpr int kTableVersion = 1;

struct ClassParams {
    double base;       // background gray level
    int count_min;     // features per patch, inclusive range
    int count_max;
    double sigma;      // gaussian profile width, pixels
    double depth;      // peak intensity offset; negative darkens, positive brightens
};

// 0: few large soft dark blobs on a light field
// 1: moderately many large dark blobs (radius ~4)
// 2: dark field with scattered bright holes
// 3: many small dark dots (radius ~2) on a slightly dimmer field
inline constexpr ClassParams kClassTable[4] = {
    {230.0, 2, 4, 3.3, -60.0},
    {230.0, 7, 10, 2.2, -170.0},
    {125.0, 8, 13, 1.1, 95.0},
    {215.0, 45, 65, 1.0, -120.0},
};

// Uniform pixel noise in [-kNoiseAmplitude, +kNoiseAmplitude].
inline constexpr int kNoiseAmplitude = 7;

// Feature centers are drawn on [kMargin, 39 - kMargin] in each axis.
inline constexpr int kMargin = 3;

}  // namespace lymphnet::synth

#endif
