#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deepcq {

/// Base of every domain error. The category tag is stable and machine-parsable;
/// the CLI prints it on failure.
class Error : public std::runtime_error {
public:
    Error(std::string_view category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define DEEPCQ_DEFINE_ERROR(Name, tag)                                      \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& message) : Error(tag, message) {} \
    }

DEEPCQ_DEFINE_ERROR(DimensionError, "dimension");
DEEPCQ_DEFINE_ERROR(DataError, "data");
DEEPCQ_DEFINE_ERROR(ArgumentError, "argument");
DEEPCQ_DEFINE_ERROR(ShapeError, "shape");
DEEPCQ_DEFINE_ERROR(FormatError, "format");
DEEPCQ_DEFINE_ERROR(IntegrityError, "integrity");
DEEPCQ_DEFINE_ERROR(StateError, "state");
DEEPCQ_DEFINE_ERROR(TrainingError, "training");
DEEPCQ_DEFINE_ERROR(MissingHeadError, "missing-head");
DEEPCQ_DEFINE_ERROR(SplitError, "split");
DEEPCQ_DEFINE_ERROR(IoError, "io");

#undef DEEPCQ_DEFINE_ERROR

}  // namespace deepcq
