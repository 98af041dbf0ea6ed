/*
 * Copyright 2026 The QuantGuard Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QUANTGUARD_ERRORS_H
#define QUANTGUARD_ERRORS_H

#include <stdexcept>
#include <string>

namespace quantguard
{

// Process exit codes used by the CLI. Every library error maps onto one of them.
enum class ExitCode : int
{
  kOk = 0,
  kBadInput = 2,
  kNumericFailure = 3,
  kFormatError = 4,
};

class Error : public std::runtime_error
{
public:
  Error(ExitCode code, std::string kind, const std::string &message)
    : std::runtime_error(message), _code(code), _kind(std::move(kind))
  {
  }

  ExitCode code() const noexcept { return _code; }

  // Short snake_case tag, stable across releases ("bad_magic", "dimension", ...).
  const std::string &kind() const noexcept { return _kind; }

private:
  ExitCode _code;
  std::string _kind;
};

class DimensionError : public Error
{
public:
  explicit DimensionError(const std::string &message)
    : Error(ExitCode::kBadInput, "dimension", message)
  {
  }
};

// Caller violated a documented precondition (non-binary strategy, missing labels, ...).
class ContractError : public Error
{
public:
  explicit ContractError(const std::string &message)
    : Error(ExitCode::kBadInput, "contract", message)
  {
  }
};

class FormatError : public Error
{
public:
  enum class Reason
  {
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kChecksumMismatch,
    kBadHeader,
    kShapeMismatch,
    kIo,
  };

  FormatError(Reason reason, const std::string &message)
    : Error(ExitCode::kFormatError, reason_tag(reason), message), _reason(reason)
  {
  }

  Reason reason() const noexcept { return _reason; }

  static const char *reason_tag(Reason reason)
  {
    switch (reason)
    {
      case Reason::kBadMagic:
        return "bad_magic";
      case Reason::kVersionMismatch:
        return "version_mismatch";
      case Reason::kTruncated:
        return "truncated";
      case Reason::kChecksumMismatch:
        return "checksum_mismatch";
      case Reason::kBadHeader:
        return "bad_header";
      case Reason::kShapeMismatch:
        return "shape_mismatch";
      case Reason::kIo:
        return "io";
    }
    return "format";
  }

private:
  Reason _reason;
};

class NumericError : public Error
{
public:
  NumericError(std::string kind, const std::string &message)
    : Error(ExitCode::kNumericFailure, std::move(kind), message)
  {
  }
};

} // namespace quantguard

#endif // QUANTGUARD_ERRORS_H
