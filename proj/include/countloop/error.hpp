// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace countloop {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define COUNTLOOP_ERROR(Name, Base)      \
    class Name : public Base {           \
    public:                              \
        using Base::Base;                \
    }

// Prompt grammar could not ground any counts.
COUNTLOOP_ERROR(ParseError, Error);
// JSON parsed, but lacks the keys or types the schema requires.
COUNTLOOP_ERROR(SchemaError, Error);
// No parseable JSON object in the input.
COUNTLOOP_ERROR(JsonError, Error);
COUNTLOOP_ERROR(CapacityError, Error);
COUNTLOOP_ERROR(EditError, Error);
COUNTLOOP_ERROR(DimError, Error);
COUNTLOOP_ERROR(ConfigError, Error);

COUNTLOOP_ERROR(BackendError, Error);
COUNTLOOP_ERROR(TransportError, BackendError);
COUNTLOOP_ERROR(RateLimitError, TransportError);
COUNTLOOP_ERROR(EmptyReplyError, BackendError);
COUNTLOOP_ERROR(ProtocolError, BackendError);

#undef COUNTLOOP_ERROR

} // namespace countloop
