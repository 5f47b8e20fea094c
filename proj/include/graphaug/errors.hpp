#pragma once

#include <stdexcept>
#include <string>

namespace graphaug {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define GRAPHAUG_DEFINE_ERROR(name)                                 \
    struct name : Error {                                           \
        explicit name(const std::string& what) : Error(what) {}     \
    }

// graph-core
GRAPHAUG_DEFINE_ERROR(InvalidOrdering);
GRAPHAUG_DEFINE_ERROR(MalformedSequence);
GRAPHAUG_DEFINE_ERROR(TooLargeForEnumeration);
GRAPHAUG_DEFINE_ERROR(InvalidBlockSize);
GRAPHAUG_DEFINE_ERROR(InvalidGraph);

// dataset-io
GRAPHAUG_DEFINE_ERROR(EmptyDataset);
GRAPHAUG_DEFINE_ERROR(MissingDatasetFile);
GRAPHAUG_DEFINE_ERROR(CorruptDataset);
GRAPHAUG_DEFINE_ERROR(ParseError);
GRAPHAUG_DEFINE_ERROR(InsufficientClassSize);
GRAPHAUG_DEFINE_ERROR(UnsupportedVersion);
GRAPHAUG_DEFINE_ERROR(CorruptFile);

// neural-core
GRAPHAUG_DEFINE_ERROR(ShapeError);
GRAPHAUG_DEFINE_ERROR(NumericalError);
GRAPHAUG_DEFINE_ERROR(ContractViolation);
GRAPHAUG_DEFINE_ERROR(IndexError);

// generators
GRAPHAUG_DEFINE_ERROR(GraphTooLarge);
GRAPHAUG_DEFINE_ERROR(InvalidTarget);

// classifiers
GRAPHAUG_DEFINE_ERROR(MissingNodeLabels);
GRAPHAUG_DEFINE_ERROR(ClassMismatch);

// pipeline
GRAPHAUG_DEFINE_ERROR(PlanMismatch);
GRAPHAUG_DEFINE_ERROR(ConfigError);
GRAPHAUG_DEFINE_ERROR(IoError);
GRAPHAUG_DEFINE_ERROR(MemoryBudgetExceeded);

#undef GRAPHAUG_DEFINE_ERROR

}  // namespace graphaug
