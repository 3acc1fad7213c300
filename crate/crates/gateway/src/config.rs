//! Endpoint configuration files.
//!
//! ```toml
//! base_url = "https://api.example.com/v1"
//! model = "reasoner"
//! api_key_env = "OPENAI_API_KEY"
//! max_in_flight = 8
//! timeout_secs = 120
//! max_retries = 3
//! ```

use std::path::Path;

use rcf_core::api::EndpointConfig;

use crate::GatewayError;

pub fn parse_endpoint_config(text: &str) -> Result<EndpointConfig, GatewayError> {
    let config: EndpointConfig = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
    validate(&config)?;
    Ok(config)
}

pub fn load_endpoint_config(path: impl AsRef<Path>) -> Result<EndpointConfig, GatewayError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    parse_endpoint_config(&text)
}

pub fn validate(config: &EndpointConfig) -> Result<(), GatewayError> {
    if config.max_in_flight == 0 {
        return Err(GatewayError::Config("max_in_flight must be >= 1".into()));
    }
    if config.timeout_secs == 0 {
        return Err(GatewayError::Config("timeout_secs must be >= 1".into()));
    }
    if !(config.base_url.starts_with("http://") || config.base_url.starts_with("https://")) {
        return Err(GatewayError::Config(format!("base_url {:?} is not an http(s) URL", config.base_url)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_file() {
        let c = parse_endpoint_config("base_url = \"http://localhost:9/v1\"\nmodel = \"m\"\nmax_retries = 5\n").unwrap();
        assert_eq!(c.max_retries, 5);
        assert_eq!(c.max_in_flight, 8);
        assert_eq!(c.api_key_env.as_deref(), Some("OPENAI_API_KEY"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_endpoint_config("base_url = \"ftp://x\"").is_err());
        assert!(parse_endpoint_config("max_in_flight = 0").is_err());
        assert!(parse_endpoint_config("model = 3").is_err());
    }
}
