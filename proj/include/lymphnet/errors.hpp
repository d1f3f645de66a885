#ifndef LYMPHNET_ERRORS_HPP
#define LYMPHNET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lymphnet {

// Shape or size mismatch in a tensor/layer operation.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data (patch records, manifests, netpbm, model files).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Loss became non-finite during training.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lymphnet

#endif
