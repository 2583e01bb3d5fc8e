#pragma once

#include <stdexcept>
#include <string>

namespace cgb {

// Every failure raised by the library derives from Error. Input problems
// (bad expressions, schemas, models) are ValidationFailure; anything that goes
// wrong while computing is NumericalFailure. The CLI maps the two families to
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), message_(std::runtime_error::what()) {}
  const std::string& kind() const { return kind_; }
  const char* what() const noexcept override { return message_.c_str(); }

  // Prefixes a location tag such as "[converge/north]"; rethrowing with
  // `throw;` keeps the dynamic type.
  void add_context(const std::string& tag) {
    context_ = tag;
    message_ = "[" + tag + "] " + std::runtime_error::what();
  }
  const std::string& context() const { return context_; }

 private:
  std::string kind_;
  std::string context_;
  std::string message_;
};

class ValidationFailure : public Error {
  using Error::Error;
};
class NumericalFailure : public Error {
  using Error::Error;
};

#define CGB_DECLARE_ERROR(Name, Base) \
  class Name : public Base {          \
   public:                            \
    explicit Name(const std::string& what) : Base(#Name, what) {} \
  }

// expression engine
class SyntaxError : public ValidationFailure {
 public:
  SyntaxError(std::size_t position, const std::string& expected)
      : ValidationFailure("SyntaxError", "at position " + std::to_string(position) + ", expected " + expected),
        position_(position),
        expected_(expected) {}
  std::size_t position() const { return position_; }
  const std::string& expected() const { return expected_; }

 private:
  std::size_t position_;
  std::string expected_;
};
CGB_DECLARE_ERROR(UnknownIdentifier, ValidationFailure);
CGB_DECLARE_ERROR(NonSmoothPrimitive, ValidationFailure);
CGB_DECLARE_ERROR(DomainError, NumericalFailure);
CGB_DECLARE_ERROR(OrderUnsupported, ValidationFailure);
CGB_DECLARE_ERROR(InvalidArgument, ValidationFailure);

// contact models
CGB_DECLARE_ERROR(ContactDegenerate, ValidationFailure);
CGB_DECLARE_ERROR(OrientationError, ValidationFailure);
CGB_DECLARE_ERROR(SingularSystem, NumericalFailure);
CGB_DECLARE_ERROR(UnknownModel, ValidationFailure);

// surfaces
CGB_DECLARE_ERROR(DegenerateImmersion, NumericalFailure);

// characteristic points
CGB_DECLARE_ERROR(NonIsolatedCharacteristicSet, NumericalFailure);
CGB_DECLARE_ERROR(NotACharacteristicPoint, NumericalFailure);
CGB_DECLARE_ERROR(EigenvaluesCoalesce, NumericalFailure);
CGB_DECLARE_ERROR(OrderExceedsKmax, NumericalFailure);
CGB_DECLARE_ERROR(CurveTracingFailed, NumericalFailure);
CGB_DECLARE_ERROR(InvalidOrder, ValidationFailure);
CGB_DECLARE_ERROR(AngleUnwrapFailed, NumericalFailure);
CGB_DECLARE_ERROR(TraceVanishes, NumericalFailure);
CGB_DECLARE_ERROR(UnclassifiedPoint, ValidationFailure);
CGB_DECLARE_ERROR(NotAKernelExtension, ValidationFailure);

// curvature measures
CGB_DECLARE_ERROR(DivergenceOutOfRange, ValidationFailure);
CGB_DECLARE_ERROR(TooCloseToCharacteristicSet, NumericalFailure);
CGB_DECLARE_ERROR(QuadratureNotConverged, NumericalFailure);
CGB_DECLARE_ERROR(DivergentTail, NumericalFailure);

// scenarios
class ParseError : public ValidationFailure {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : ValidationFailure("ParseError", "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};
class ValidationError : public ValidationFailure {
 public:
  ValidationError(std::string field, const std::string& reason)
      : ValidationFailure("ValidationError", field + ": " + reason), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};
CGB_DECLARE_ERROR(IoError, ValidationFailure);
CGB_DECLARE_ERROR(StageDependencyError, ValidationFailure);

#undef CGB_DECLARE_ERROR

}  // namespace cgb
