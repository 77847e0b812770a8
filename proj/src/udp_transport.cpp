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

#include "kadrtc/udp_transport.hpp"
#include "kadrtc/protocol.hpp"

#include <boost/asio/ip/udp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/steady_timer.hpp>

#include <array>
#include <chrono>
#include <unordered_map>

namespace kadrtc {

namespace asio = boost::asio;
using udp = asio::ip::udp;

struct udp_transport::state : std::enable_shared_from_this<udp_transport::state>
{
	state(asio::io_context& io) : io(io), socket(io), epoch(std::chrono::steady_clock::now()) {}

	asio::io_context& io;
	udp::socket socket;
	endpoint local;
	std::chrono::steady_clock::time_point epoch;
	receive_handler handler;
	bool closed = false;

	std::array<char, 65536> buffer;
	udp::endpoint sender;

	timer_id next_timer = 1;
	std::unordered_map<timer_id, std::unique_ptr<asio::steady_timer>> timers;
	std::unordered_map<std::string, udp::endpoint> resolved;

	std::optional<udp::endpoint> resolve(endpoint const& e)
	{
		if (auto i = resolved.find(e.str()); i != resolved.end()) return i->second;
		auto parts = e.split();
		if (!parts) return std::nullopt;
		boost::system::error_code ec;
		auto addr = asio::ip::make_address(parts->first, ec);
		udp::endpoint out;
		if (!ec)
		{
			out = udp::endpoint(addr, parts->second);
		}
		else
		{
			udp::resolver resolver(io);
			auto results = resolver.resolve(udp::v4(), parts->first, std::to_string(parts->second), ec);
			if (ec || results.empty()) return std::nullopt;
			out = *results.begin();
		}
		resolved.emplace(e.str(), out);
		return out;
	}

	void receive()
	{
		socket.async_receive_from(asio::buffer(buffer), sender
			, [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
				if (self->closed) return;
				if (!ec && self->handler)
				{
					endpoint const from(self->sender.address().to_string() + ":" + std::to_string(self->sender.port()));
					self->handler(from, std::string_view(self->buffer.data(), n));
				}
				if (self->closed) return;
				self->receive();
			});
	}
};

udp_transport::udp_transport(asio::io_context& io, endpoint const& listen)
	: m_state(std::make_shared<state>(io))
{
	auto parts = listen.split();
	if (!parts) throw transport_error("bad listen address: " + listen.str());
	boost::system::error_code ec;
	auto addr = asio::ip::make_address(parts->first, ec);
	if (ec) throw transport_error("bad listen address: " + listen.str());
	udp::endpoint const ep(addr, parts->second);
	m_state->socket.open(ep.protocol(), ec);
	if (!ec) m_state->socket.bind(ep, ec);
	if (ec) throw transport_error("cannot bind " + listen.str() + ": " + ec.message());
	auto const bound = m_state->socket.local_endpoint();
	std::string host = parts->first;
	if (addr.is_unspecified()) host = addr.is_v6() ? "::1" : "127.0.0.1";
	m_state->local = endpoint(host + ":" + std::to_string(bound.port()));
	m_state->receive();
}

udp_transport::~udp_transport()
{
	m_state->closed = true;
	m_state->handler = {};
	for (auto& [id, t] : m_state->timers) t->cancel();
	m_state->timers.clear();
	boost::system::error_code ec;
	m_state->socket.close(ec);
}

endpoint const& udp_transport::local_address() const { return m_state->local; }

void udp_transport::send(endpoint const& to, std::string_view datagram)
{
	if (datagram.size() > max_datagram_size) throw transport_error("datagram too large");
	asio::post(m_state->io, [self = m_state, to, data = std::string(datagram)] {
		if (self->closed) return;
		auto dest = self->resolve(to);
		if (!dest) return;
		boost::system::error_code ec;
		self->socket.send_to(asio::buffer(data), *dest, 0, ec);
	});
}

void udp_transport::set_receive_handler(receive_handler handler) { m_state->handler = std::move(handler); }

timestamp udp_transport::now() const
{
	return std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - m_state->epoch);
}

timer_id udp_transport::schedule(milliseconds delay, std::function<void()> fn)
{
	timer_id const id = m_state->next_timer++;
	auto timer = std::make_unique<asio::steady_timer>(m_state->io, delay);
	timer->async_wait([self = m_state, id, fn = std::move(fn)](boost::system::error_code ec) {
		if (ec || self->closed) return;
		if (self->timers.erase(id) == 0) return;
		fn();
	});
	m_state->timers.emplace(id, std::move(timer));
	return id;
}

void udp_transport::cancel(timer_id id)
{
	auto const i = m_state->timers.find(id);
	if (i == m_state->timers.end()) return;
	i->second->cancel();
	m_state->timers.erase(i);
}

event_loop::event_loop()
	: m_work(asio::make_work_guard(m_io))
	, m_thread([this] { m_io.run(); })
{}

event_loop::~event_loop() { stop(); }

void event_loop::post(std::function<void()> fn) { asio::post(m_io, std::move(fn)); }

void event_loop::stop()
{
	m_work.reset();
	m_io.stop();
	if (m_thread.joinable()) m_thread.join();
}

} // namespace kadrtc
