#pragma once

#include <stdexcept>
#include <string>

namespace c3vg {

// Base for every error the library signals. `bad_input()` separates caller
// mistakes (exit code 2 in the CLI) from runtime failures (exit code 3).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool bad_input = true)
      : std::runtime_error(what), bad_input_(bad_input) {}
  bool bad_input() const noexcept { return bad_input_; }

 private:
  bool bad_input_;
};

class EmptyMask : public Error {
 public:
  EmptyMask() : Error("mask has no foreground pixels") {}
};

class EmptyExpression : public Error {
 public:
  EmptyExpression() : Error("expression is empty") {}
};

class BadImageShape : public Error {
 public:
  using Error::Error;
};

class GridTooSmall : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class BadAnnotation : public Error {
 public:
  BadAnnotation(const std::string& what, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class EmptyEvaluation : public Error {
 public:
  explicit EmptyEvaluation(const std::string& what = "nothing to evaluate") : Error(what) {}
};

class BadConfig : public Error {
 public:
  using Error::Error;
};

class NanLoss : public Error {
 public:
  explicit NanLoss(const std::string& what) : Error(what, /*bad_input=*/false) {}
};

}  // namespace c3vg
