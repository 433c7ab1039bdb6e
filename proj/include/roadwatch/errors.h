// Copyright 2026 The RoadWatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace roadwatch {

// Invalid argument to a pure operation (bad frame dims, fps <= 0, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Frame sequence numbers fed out of order to a stateful consumer.
class OrderingError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed label file or scenario file.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Detector backend failed (bridge timeout, process died, ...).
class DetectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Wire-level contract violation: unknown message type, seq mismatch,
// conflicting chunk counts.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Byte stream ended inside a length-prefixed frame.
class FramingError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

// Control frame length exceeds the 16 MiB cap.
class OversizeError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

class NetworkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UploadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SessionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace roadwatch
