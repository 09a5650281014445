#pragma once

#include <stdexcept>
#include <string>

namespace ovce {

/// Base of every error raised by the engine. `kind()` is the stable name
/// used in CLI messages and HTTP error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), message_(what) {}

    const std::string& kind() const noexcept { return kind_; }
    /// what() without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string kind_;
    std::string message_;
};

#define OVCE_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(#Name, what) {}       \
    }

OVCE_DEFINE_ERROR(ParseError);
OVCE_DEFINE_ERROR(DuplicateConceptName);
OVCE_DEFINE_ERROR(EmptySubset);
OVCE_DEFINE_ERROR(UnknownConceptId);
OVCE_DEFINE_ERROR(ShapeMismatch);
OVCE_DEFINE_ERROR(VersionMismatch);
OVCE_DEFINE_ERROR(CorruptArchive);
OVCE_DEFINE_ERROR(PartitionViolation);
OVCE_DEFINE_ERROR(DegenerateValues);
OVCE_DEFINE_ERROR(MissingInfo);
OVCE_DEFINE_ERROR(EmptyCandidatePool);
OVCE_DEFINE_ERROR(SearchSpaceTooLarge);
OVCE_DEFINE_ERROR(KeyMismatch);
OVCE_DEFINE_ERROR(CyclicGraph);
OVCE_DEFINE_ERROR(ConceptNotInFormula);
OVCE_DEFINE_ERROR(InvalidSpec);
OVCE_DEFINE_ERROR(AnnotatorUnavailable);
OVCE_DEFINE_ERROR(ConfigError);
OVCE_DEFINE_ERROR(PortInUse);
OVCE_DEFINE_ERROR(IoError);

#undef OVCE_DEFINE_ERROR

} // namespace ovce
