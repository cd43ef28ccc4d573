#pragma once

#include <stdexcept>
#include <string>

namespace msnn {

// Base class for everything thrown by this library.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable input data (files, manifests, checkpoints, DICOM).
struct io_error : error {
    explicit io_error(const std::string& msg) : error(msg) {}
};

// Shape or dimension mismatch between tensors, layers or configs.
struct shape_error : error {
    explicit shape_error(const std::string& msg) : error(msg) {}
};

// Non-finite values or other numeric failures (aborts training).
struct numeric_error : error {
    explicit numeric_error(const std::string& msg) : error(msg) {}
};

} // namespace msnn
