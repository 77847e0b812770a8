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
#include "kadrtc/signaling.hpp"

#include <boost/asio/io_context.hpp>

#include <memory>

namespace kadrtc {

// Accepts browser WebSockets on path /ws and feeds their text frames to a
// gateway. Must run on the same io_context as the gateway's node.
class ws_gateway
{
public:
	// throws transport_error if the listen address cannot be bound
	ws_gateway(boost::asio::io_context& io, gateway& gw, endpoint const& listen);
	~ws_gateway();

	ws_gateway(ws_gateway const&) = delete;
	ws_gateway& operator=(ws_gateway const&) = delete;

	endpoint const& local_address() const;

private:
	struct impl;
	std::shared_ptr<impl> m_impl;
};

} // namespace kadrtc
