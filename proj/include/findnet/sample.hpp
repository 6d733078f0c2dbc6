#pragma once

#include <string>

#include "findnet/tensor.hpp"

namespace findnet {

enum class SizeClass { small, medium, large };

inline const char* to_string(SizeClass c) {
    switch (c) {
        case SizeClass::small: return "small";
        case SizeClass::medium: return "medium";
        case SizeClass::large: return "large";
    }
    return "?";
}

inline SizeClass size_class_from_string(const std::string& s) {
    if (s == "small") return SizeClass::small;
    if (s == "medium") return SizeClass::medium;
    if (s == "large") return SizeClass::large;
    throw DataError("unknown size class '" + s + "'");
}

// One training/evaluation unit: corrupted image Y, ground truth X_gt,
// non-metal mask I (1 off metal), LI initialization X0, metal-size label.
// All images are [1,H,W]; I is binary and complements the metal mask.
struct CTSample {
    std::string id;
    Tensor Y;
    Tensor X_gt;
    Tensor I;
    Tensor X0;
    SizeClass size_class = SizeClass::small;
    bool no_metal = false;

    void validate() const {
        if (Y.rank() != 3 || Y.extent(0) != 1)
            throw DimError("CTSample: images must be [1,H,W], got " + shape_str(Y.shape()));
        require_same_shape(Y, X_gt, "CTSample Y/X_gt");
        require_same_shape(Y, I, "CTSample Y/I");
        require_same_shape(Y, X0, "CTSample Y/X0");
        for (int64_t i = 0; i < I.numel(); ++i)
            if (I[i] != 0.0 && I[i] != 1.0) throw ContractError("CTSample: mask I must be binary");
    }
};

}  // namespace findnet
