#pragma once

#include <stdexcept>
#include <string>

namespace stgno {

/// Base of every library error. `kind()` is a short stable tag used by the
/// CLI for its machine-parsable error prefix.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define STGNO_DEFINE_ERROR(Name, tag)                                            \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& what) : Error(tag, what) {}             \
    }

STGNO_DEFINE_ERROR(DimensionError, "dimension");
STGNO_DEFINE_ERROR(IndexError, "index");
STGNO_DEFINE_ERROR(ContractError, "contract");
STGNO_DEFINE_ERROR(ParameterError, "parameter");
STGNO_DEFINE_ERROR(ParseError, "parse");
STGNO_DEFINE_ERROR(MappingError, "mapping");
STGNO_DEFINE_ERROR(ThresholdError, "threshold");
STGNO_DEFINE_ERROR(EmptyFeatureSetError, "empty-featureset");
STGNO_DEFINE_ERROR(DegenerateDataError, "degenerate-data");
STGNO_DEFINE_ERROR(NormalizationError, "normalization");
STGNO_DEFINE_ERROR(LoadError, "load");
STGNO_DEFINE_ERROR(IoError, "io");

#undef STGNO_DEFINE_ERROR

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch, std::string graph)
        : Error("divergence", what), epoch_(epoch), graph_(std::move(graph)) {}

    int epoch() const noexcept { return epoch_; }
    const std::string& graph() const noexcept { return graph_; }

private:
    int epoch_;
    std::string graph_;
};

}  // namespace stgno
