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

#include "kadrtc/ws_gateway.hpp"
#include "kadrtc/transport.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>

namespace kadrtc {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

	class ws_link : public client_link, public std::enable_shared_from_this<ws_link>
	{
	public:
		ws_link(tcp::socket socket, gateway& gw, std::shared_ptr<bool> server_alive)
			: m_ws(std::move(socket))
			, m_gateway(gw)
			, m_server_alive(std::move(server_alive))
		{}

		void start()
		{
			http::async_read(m_ws.next_layer(), m_buffer, m_request
				, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
		}

		bool send_frame(std::string const& text) override
		{
			if (m_closed) return false;
			m_outbox.push_back(text);
			if (m_outbox.size() == 1 && m_open) write_next();
			return true;
		}

		void shutdown()
		{
			m_closed = true;
			beast::error_code ec;
			m_ws.next_layer().close(ec);
		}

	private:
		void on_request(beast::error_code ec)
		{
			if (ec) return shutdown();
			if (!websocket::is_upgrade(m_request) || m_request.target() != "/ws")
			{
				auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, m_request.version());
				res->set(http::field::content_type, "text/plain");
				res->body() = "websocket endpoint is /ws\n";
				res->prepare_payload();
				http::async_write(m_ws.next_layer(), *res
					, [self = shared_from_this(), res](beast::error_code, std::size_t) { self->shutdown(); });
				return;
			}
			m_ws.text(true);
			m_ws.async_accept(m_request, [self = shared_from_this()](beast::error_code ec) {
				if (ec || !*self->m_server_alive) return self->shutdown();
				self->m_open = true;
				self->m_id = self->m_gateway.attach(self);
				self->m_attached = true;
				if (!self->m_outbox.empty()) self->write_next();
				self->read_next();
			});
		}

		void read_next()
		{
			m_ws.async_read(m_frame, [self = shared_from_this()](beast::error_code ec, std::size_t) {
				if (!*self->m_server_alive) return;
				if (ec)
				{
					self->m_closed = true;
					if (self->m_attached) self->m_gateway.detach(self->m_id);
					self->m_attached = false;
					return;
				}
				std::string const text = beast::buffers_to_string(self->m_frame.data());
				self->m_frame.consume(self->m_frame.size());
				self->m_gateway.on_frame(self->m_id, text);
				self->read_next();
			});
		}

		void write_next()
		{
			m_ws.async_write(asio::buffer(m_outbox.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
				if (ec)
				{
					self->m_closed = true;
					return;
				}
				self->m_outbox.pop_front();
				if (!self->m_outbox.empty()) self->write_next();
			});
		}

		websocket::stream<tcp::socket> m_ws;
		gateway& m_gateway;
		std::shared_ptr<bool> m_server_alive;
		beast::flat_buffer m_buffer;
		beast::flat_buffer m_frame;
		http::request<http::string_body> m_request;
		std::deque<std::string> m_outbox;
		gateway::client_id m_id = 0;
		bool m_open = false;
		bool m_attached = false;
		bool m_closed = false;
	};

} // anonymous namespace

struct ws_gateway::impl : std::enable_shared_from_this<ws_gateway::impl>
{
	impl(asio::io_context& io, gateway& gw) : acceptor(io), gw(gw), alive(std::make_shared<bool>(true)) {}

	tcp::acceptor acceptor;
	gateway& gw;
	endpoint local;
	std::shared_ptr<bool> alive;
	std::vector<std::weak_ptr<ws_link>> links;

	void accept()
	{
		acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
			if (!*self->alive) return;
			if (!ec)
			{
				auto link = std::make_shared<ws_link>(std::move(socket), self->gw, self->alive);
				self->links.push_back(link);
				link->start();
			}
			self->accept();
		});
	}
};

ws_gateway::ws_gateway(asio::io_context& io, gateway& gw, endpoint const& listen)
	: m_impl(std::make_shared<impl>(io, gw))
{
	auto parts = listen.split();
	if (!parts) throw transport_error("bad websocket listen address: " + listen.str());
	beast::error_code ec;
	auto const addr = asio::ip::make_address(parts->first, ec);
	if (ec) throw transport_error("bad websocket listen address: " + listen.str());
	tcp::endpoint const ep(addr, parts->second);
	auto& a = m_impl->acceptor;
	a.open(ep.protocol(), ec);
	if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
	if (!ec) a.bind(ep, ec);
	if (!ec) a.listen(asio::socket_base::max_listen_connections, ec);
	if (ec) throw transport_error("cannot listen on " + listen.str() + ": " + ec.message());
	m_impl->local = endpoint(parts->first + ":" + std::to_string(a.local_endpoint().port()));
	m_impl->accept();
}

ws_gateway::~ws_gateway()
{
	*m_impl->alive = false;
	beast::error_code ec;
	m_impl->acceptor.close(ec);
	for (auto& w : m_impl->links)
		if (auto l = w.lock()) l->shutdown();
}

endpoint const& ws_gateway::local_address() const { return m_impl->local; }

} // namespace kadrtc
