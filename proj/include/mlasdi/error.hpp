// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlasdi {

/// Error categories. The CLI prints these as a machine-parsable prefix.
enum class ErrorKind {
  shape,
  divergence,
  conditioning,
  ordering,
  not_fitted,
  undefined_metric,
  bad_magic,
  unsupported_version,
  truncated,
  dimension_overflow,
  format,
  io,
  config,
  argument,
};

constexpr std::string_view kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::conditioning: return "conditioning";
    case ErrorKind::ordering: return "ordering";
    case ErrorKind::not_fitted: return "not_fitted";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::unsupported_version: return "unsupported_version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::dimension_overflow: return "dimension_overflow";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::argument: return "argument";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace mlasdi
