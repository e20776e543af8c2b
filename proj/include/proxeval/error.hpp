// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proxeval {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PROXEVAL_DEFINE_ERROR(Name)        \
    class Name : public Error {            \
    public:                                \
        using Error::Error;                \
    }

// Trace model.
PROXEVAL_DEFINE_ERROR(InvalidTrace);
PROXEVAL_DEFINE_ERROR(IdMismatch);
PROXEVAL_DEFINE_ERROR(SensorMismatch);
PROXEVAL_DEFINE_ERROR(RoleError);

// Synthesis / configuration.
PROXEVAL_DEFINE_ERROR(ConfigError);

// Preprocessing and similarity.
PROXEVAL_DEFINE_ERROR(TooFewSamples);
PROXEVAL_DEFINE_ERROR(LengthMismatch);
PROXEVAL_DEFINE_ERROR(EmptySeries);
PROXEVAL_DEFINE_ERROR(DegenerateSeries);

// Evaluation.
PROXEVAL_DEFINE_ERROR(InsufficientData);
PROXEVAL_DEFINE_ERROR(DegenerateLabels);

// Persistence and I/O.
PROXEVAL_DEFINE_ERROR(DuplicateKey);
PROXEVAL_DEFINE_ERROR(IoError);

// Harness.
PROXEVAL_DEFINE_ERROR(ChannelError);
PROXEVAL_DEFINE_ERROR(BindError);

#undef PROXEVAL_DEFINE_ERROR

/// Malformed external input. Carries the 1-based line number (0 when unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& where, std::size_t line, const std::string& what)
        : Error(where + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace proxeval
