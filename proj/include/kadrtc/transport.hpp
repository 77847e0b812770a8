/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include "kadrtc/endpoint.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kadrtc {

struct transport_error : std::runtime_error
{
	using std::runtime_error::runtime_error;
};

using timer_id = std::uint64_t;

// Everything a node needs from its environment: unreliable datagrams, a
// clock and one-shot timers. Callbacks are invoked on the node's event
// loop, never concurrently with each other.
class transport
{
public:
	using receive_handler = std::function<void(endpoint const& from, std::string_view datagram)>;

	virtual ~transport() = default;

	virtual endpoint const& local_address() const = 0;

	// Best-effort delivery. Throws transport_error if the datagram exceeds
	// max_datagram_size; network failures are silent.
	virtual void send(endpoint const& to, std::string_view datagram) = 0;

	virtual void set_receive_handler(receive_handler handler) = 0;

	virtual timestamp now() const = 0;
	virtual timer_id schedule(milliseconds delay, std::function<void()> fn) = 0;
	virtual void cancel(timer_id id) = 0;
};

} // namespace kadrtc
