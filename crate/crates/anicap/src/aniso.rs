//! Textual and JSON descriptions of anisotropies and of the derived
//! half-space constants.

use std::fmt;
use std::str::FromStr;

use anicap_core::config::make_config;
use anicap_core::{Anisotropy, Family, HalfSpaceConfig, Mat3};
use serde::{Deserialize, Serialize};

/// Sphere samples used for the derived constants everywhere in the CLI.
pub const SPHERE_SAMPLES: usize = 4000;

/// Serializable form of an [`Anisotropy`].
///
/// JSON: `{"family":"isotropic"}`, `{"family":"ellipsoidal","Q":[[..],[..],[..]]}`
/// or `{"family":"perturbed-sphere","epsilon":0.05}`, each with an optional
/// positive `"scale"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnisoSpec {
    Isotropic {
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    Ellipsoidal {
        #[serde(rename = "Q")]
        q: [[f64; 3]; 3],
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    PerturbedSphere {
        epsilon: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

impl Default for AnisoSpec {
    fn default() -> Self {
        AnisoSpec::Isotropic { scale: 1.0 }
    }
}

impl AnisoSpec {
    pub fn build(&self) -> anicap_core::Result<Anisotropy> {
        let (a, scale) = match self {
            AnisoSpec::Isotropic { scale } => (Anisotropy::isotropic(), *scale),
            AnisoSpec::Ellipsoidal { q, scale } => {
                (Anisotropy::ellipsoidal(Mat3::from_fn(|i, j| q[i][j]))?, *scale)
            }
            AnisoSpec::PerturbedSphere { epsilon, scale } => (Anisotropy::perturbed_sphere(*epsilon)?, *scale),
        };
        if scale == 1.0 {
            Ok(a)
        } else {
            a.scaled(scale)
        }
    }

    pub fn from_anisotropy(a: &Anisotropy) -> Self {
        let scale = a.scale();
        match a.family() {
            Family::Isotropic => AnisoSpec::Isotropic { scale },
            Family::Ellipsoidal(q) => AnisoSpec::Ellipsoidal {
                q: [0, 1, 2].map(|i| [0, 1, 2].map(|j| q[(i, j)])),
                scale,
            },
            Family::PerturbedSphere(epsilon) => AnisoSpec::PerturbedSphere { epsilon, scale },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse anisotropy {input:?}: {reason} (expected iso, ellip:a,b,c, ellip:<9 entries> or perturbed:eps, optionally followed by @scale)")]
pub struct ParseAnisoError {
    input: String,
    reason: String,
}

/// Short form used on the command line: `iso`, `ellip:a,b,c` for a diagonal
/// `Q`, `ellip:q11,q12,...,q33` for a full one, `perturbed:eps`, each with
/// an optional `@scale` suffix.
impl FromStr for AnisoSpec {
    type Err = ParseAnisoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseAnisoError { input: s.to_string(), reason: reason.to_string() };
        let (body, scale) = match s.trim().split_once('@') {
            Some((b, sc)) => (b, sc.trim().parse::<f64>().map_err(|_| err("bad scale"))?),
            None => (s.trim(), 1.0),
        };
        let (name, args) = match body.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (body, None),
        };
        let nums = |a: Option<&str>| -> Result<Vec<f64>, ParseAnisoError> {
            a.ok_or_else(|| err("missing parameters"))?
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| err("bad number")))
                .collect()
        };
        match name {
            "iso" | "isotropic" => {
                if args.is_some() {
                    return Err(err("isotropic takes no parameters"));
                }
                Ok(AnisoSpec::Isotropic { scale })
            }
            "ellip" | "ellipsoidal" => {
                let v = nums(args)?;
                let q = match v.len() {
                    3 => [[v[0], 0.0, 0.0], [0.0, v[1], 0.0], [0.0, 0.0, v[2]]],
                    9 => [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]],
                    _ => return Err(err("ellipsoidal needs 3 or 9 entries")),
                };
                Ok(AnisoSpec::Ellipsoidal { q, scale })
            }
            "perturbed" | "perturbed-sphere" => match nums(args)?.as_slice() {
                [e] => Ok(AnisoSpec::PerturbedSphere { epsilon: *e, scale }),
                _ => Err(err("perturbed needs one parameter")),
            },
            _ => Err(err("unknown family")),
        }
    }
}

impl fmt::Display for AnisoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self {
            AnisoSpec::Isotropic { scale } => {
                write!(f, "iso")?;
                *scale
            }
            AnisoSpec::Ellipsoidal { q, scale } => {
                let diagonal = (0..3).all(|i| (0..3).all(|j| i == j || q[i][j] == 0.0));
                if diagonal {
                    write!(f, "ellip:{},{},{}", q[0][0], q[1][1], q[2][2])?;
                } else {
                    let all: Vec<String> = q.iter().flatten().map(|x| x.to_string()).collect();
                    write!(f, "ellip:{}", all.join(","))?;
                }
                *scale
            }
            AnisoSpec::PerturbedSphere { epsilon, scale } => {
                write!(f, "perturbed:{epsilon}")?;
                *scale
            }
        };
        if scale != 1.0 {
            write!(f, "@{scale}")?;
        }
        Ok(())
    }
}

/// JSON form of a [`HalfSpaceConfig`] together with its anisotropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConfig {
    pub anisotropy: AnisoSpec,
    pub omega0: f64,
    #[serde(rename = "EF")]
    pub ef: [f64; 3],
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub sphere_samples: usize,
}

impl DerivedConfig {
    pub fn new(aniso: &Anisotropy, config: &HalfSpaceConfig) -> Self {
        Self {
            anisotropy: AnisoSpec::from_anisotropy(aniso),
            omega0: config.omega0,
            ef: [config.ef.x, config.ef.y, config.ef.z],
            c1: config.c1,
            c2: config.c2,
            lambda: config.lambda,
            sphere_samples: config.samples,
        }
    }
}

/// Build the anisotropy and its half-space constants.
pub fn setup(spec: &AnisoSpec, omega0: f64) -> anicap_core::Result<(Anisotropy, HalfSpaceConfig)> {
    let a = spec.build()?;
    let c = make_config(&a, omega0, SPHERE_SAMPLES)?;
    Ok((a, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_forms_round_trip() {
        for s in ["iso", "ellip:4,1,1", "ellip:2,0.5,0,0.5,1,0,0,0,1.5", "perturbed:0.05", "ellip:4,1,1@2.5"] {
            let spec: AnisoSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            spec.build().unwrap();
        }
        assert_eq!("isotropic".parse::<AnisoSpec>().unwrap(), AnisoSpec::default());
        for bad in ["", "iso:1", "ellip:1,2", "ellip:a,b,c", "perturbed", "cube", "iso@x"] {
            assert!(bad.parse::<AnisoSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn json_forms() {
        let spec: AnisoSpec = serde_json::from_str(r#"{"family":"ellipsoidal","Q":[[4,0,0],[0,1,0],[0,0,1]]}"#).unwrap();
        assert_eq!(spec, "ellip:4,1,1".parse().unwrap());
        let back = serde_json::to_string(&spec).unwrap();
        assert_eq!(back, r#"{"family":"ellipsoidal","Q":[[4.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0]]}"#);
        let p: AnisoSpec = serde_json::from_str(r#"{"family":"perturbed-sphere","epsilon":0.05,"scale":2}"#).unwrap();
        assert_eq!(p.build().unwrap().scale(), 2.0);
        assert!(serde_json::from_str::<AnisoSpec>(r#"{"family":"isotropic","Q":1}"#).is_err());
        assert!(AnisoSpec::Ellipsoidal { q: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]], scale: 1.0 }.build().is_err());
    }

    #[test]
    fn derived_constants_of_the_ellipsoid() {
        let (a, c) = setup(&"ellip:4,1,1".parse().unwrap(), 0.0).unwrap();
        let d = DerivedConfig::new(&a, &c);
        assert_eq!(d.ef, [0.0, 0.0, 1.0]);
        assert!((d.c1 - 1.0).abs() < 1e-12 && (d.c2 - 2.0).abs() < 1e-3);
        assert!((d.lambda - 4.0).abs() < 1e-2);
    }
}
