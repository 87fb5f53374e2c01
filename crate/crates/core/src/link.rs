//! Link budget and CRLB measurement noise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::SPEED_OF_LIGHT;

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Ratio of the Gabor bandwidth of a BPSK(1) spectrum limited to its main
/// lobe (0.335 Rc) to the `Rc / sqrt(3)` reference.
pub const CA_BANDWIDTH_FACTOR: f64 = 0.58;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmitPower {
    /// Satellite EIRP density, dBW/MHz.
    EirpDensity(f64),
    /// Ground-received signal power, dBW.
    ReceivedPower(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangingWaveform {
    /// Flat-spectrum OFDM reference signal over the full bandwidth.
    OfdmPrs,
    /// Spreading-code correlation at the chip rate.
    CaCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub power: TransmitPower,
    pub waveform: RangingWaveform,
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub chip_or_symbol_rate: f64,
    pub rx_antenna_gain: f64,
    pub system_noise_temp: f64,
    /// Receive-chain losses (noise figure, polarization, margins), dB.
    pub misc_losses: f64,
    /// Carrier integration per epoch, seconds.
    pub coherent_integration: f64,
    /// Signal duration behind one delay measurement, seconds: one OFDM
    /// symbol for PRS, one code period for C/A.
    pub delay_integration: f64,
}

impl LinkConfig {
    pub fn leo_default() -> Self {
        Self {
            power: TransmitPower::EirpDensity(34.0),
            waveform: RangingWaveform::OfdmPrs,
            carrier_frequency: 2.0e9,
            bandwidth: 1.0e6,
            chip_or_symbol_rate: 15e3,
            rx_antenna_gain: 0.0,
            system_noise_temp: 290.0,
            misc_losses: 15.0,
            coherent_integration: 0.01,
            delay_integration: 1.0 / 15e3,
        }
    }

    pub fn gnss_default() -> Self {
        Self {
            power: TransmitPower::ReceivedPower(-158.5),
            waveform: RangingWaveform::CaCode,
            carrier_frequency: 1575.42e6,
            bandwidth: 2.046e6,
            chip_or_symbol_rate: 1.023e6,
            rx_antenna_gain: 0.0,
            system_noise_temp: 290.0,
            misc_losses: 6.0,
            coherent_integration: 0.01,
            delay_integration: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth", self.bandwidth),
            ("chip_or_symbol_rate", self.chip_or_symbol_rate),
            ("system_noise_temp", self.system_noise_temp),
            ("coherent_integration", self.coherent_integration),
            ("delay_integration", self.delay_integration),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// RMS (Gabor) bandwidth of the ranging waveform, Hz.
    pub fn rms_bandwidth(&self) -> f64 {
        match self.waveform {
            RangingWaveform::OfdmPrs => self.bandwidth / 12f64.sqrt(),
            RangingWaveform::CaCode => self.chip_or_symbol_rate / 3f64.sqrt() * CA_BANDWIDTH_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Meters.
    pub sigma_delay: f64,
    /// Cycles.
    pub sigma_phase: f64,
    /// dB-Hz.
    pub cn0: f64,
    /// False when the SNR was non-positive and the sigmas are infinite.
    pub valid: bool,
}

pub fn free_space_path_loss(distance: f64, f_c: f64) -> f64 {
    20.0 * (4.0 * PI * distance * f_c / SPEED_OF_LIGHT).log10()
}

/// Carrier-to-noise-density ratio at the receiver, dB-Hz.
pub fn received_cn0(config: &LinkConfig, distance: f64) -> f64 {
    let carrier = match config.power {
        TransmitPower::EirpDensity(density) => {
            density + 10.0 * (config.bandwidth / 1e6).log10() - free_space_path_loss(distance, config.carrier_frequency)
        }
        TransmitPower::ReceivedPower(p) => p,
    } + config.rx_antenna_gain
        - config.misc_losses;
    carrier - 10.0 * (BOLTZMANN * config.system_noise_temp).log10()
}

/// CRLB standard deviations for one delay and one carrier-phase measurement.
pub fn error_sigmas(config: &LinkConfig, cn0: f64) -> ErrorModel {
    let density = 10f64.powf(cn0 / 10.0);
    let snr_phase = density * config.coherent_integration;
    let snr_delay = density * config.delay_integration;
    if !(snr_phase > 0.0 && snr_delay > 0.0) {
        return ErrorModel {
            sigma_delay: f64::INFINITY,
            sigma_phase: f64::INFINITY,
            cn0,
            valid: false,
        };
    }
    ErrorModel {
        sigma_delay: SPEED_OF_LIGHT / (2.0 * PI * config.rms_bandwidth() * (2.0 * snr_delay).sqrt()),
        sigma_phase: 1.0 / (2.0 * PI * (2.0 * snr_phase).sqrt()),
        cn0,
        valid: true,
    }
}

pub fn link_error_model(config: &LinkConfig, distance: f64) -> ErrorModel {
    error_sigmas(config, received_cn0(config, distance))
}
