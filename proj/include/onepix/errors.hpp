#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onepix {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/model shape disagreement.
struct ShapeError : Error {
    using Error::Error;
};

// Class index or label outside [0, K).
struct IndexError : Error {
    using Error::Error;
};

// Malformed model file or image file; `offset` is the byte position at
// which parsing failed.
struct FormatError : Error {
    std::size_t offset;
    FormatError(const std::string& what, std::size_t at)
        : Error(what + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
};

// Model file with an unsupported format version.
struct VersionError : Error {
    using Error::Error;
};

struct EmptyCorpusError : Error {
    using Error::Error;
};

struct EmptySusceptibilitySetError : Error {
    using Error::Error;
};

// run_attack refuses images the model already gets wrong.
struct NotCorrectlyClassifiedError : Error {
    using Error::Error;
};

// Corpus ingestion failure; message names the offending entry.
struct IngestionError : Error {
    using Error::Error;
};

// Corpus images must share one set of dimensions.
struct DimensionMismatchError : Error {
    using Error::Error;
};

}  // namespace onepix
