use std::collections::{BTreeMap, HashMap};

use axum::body::Bytes;
use axum::extract::{Multipart, Path, State};
use axum::http::{header, HeaderName, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use makeupbag_core::classical::{ChromaBands, GmmOptions};
use makeupbag_core::geometry::region_encoding;
use makeupbag_core::image::{color_offset, decode_image, decode_mask, encode_mask_png, encode_png};
use makeupbag_core::{ImageTensor, LandmarkSet, Region};
use makeupbag_models::pipeline::{extract_onto, stage_one, ExtractOn, MaskSource};
use serde::Deserialize;
use serde_json::{json, Value};

use super::error::ServiceError;
use super::session::{NewSession, Status};
use super::{AppState, SessionState};

type Reply<T> = Result<T, ServiceError>;

const MASK_VERSION: HeaderName = HeaderName::from_static("x-mask-version");
const RESULT_VERSION: HeaderName = HeaderName::from_static("x-result-version");

/// Runs `f` on the blocking pool, holding the session lock when `id` is given,
/// all within the configured timeout.
async fn blocking<T, F>(state: &AppState, id: Option<&str>, f: F) -> Reply<T>
where
    T: Send + 'static,
    F: FnOnce() -> Reply<T> + Send + 'static,
{
    let lock = id.map(|id| state.store.lock(id));
    let work = async move {
        let guard = match lock {
            Some(l) => Some(l.lock_owned().await),
            None => None,
        };
        tokio::task::spawn_blocking(move || {
            let _guard = guard;
            f()
        })
        .await
    };
    match tokio::time::timeout(state.timeout, work).await {
        Err(_) => Err(ServiceError::Timeout),
        Ok(Err(e)) => Err(ServiceError::Internal(format!("worker failed: {e}"))),
        Ok(Ok(r)) => r,
    }
}

pub async fn create_session(
    State(state): State<AppState>,
    mut form: Multipart,
) -> Reply<impl IntoResponse> {
    let mut fields: HashMap<String, Bytes> = HashMap::new();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        fields.insert(name, data);
    }
    let detector = state.detector.clone();
    let store = state.store.clone();
    let created = blocking(&state, None, move || {
        let image = |name: &str| -> Reply<ImageTensor> {
            let bytes = fields
                .get(name)
                .ok_or_else(|| ServiceError::BadRequest(format!("missing field `{name}`")))?;
            Ok(decode_image(bytes)?)
        };
        let landmarks = |name: &str, img: &ImageTensor| -> Reply<LandmarkSet> {
            let lms = match fields.get(name) {
                Some(bytes) => {
                    let text = std::str::from_utf8(bytes)
                        .map_err(|_| ServiceError::BadRequest(format!("`{name}` is not UTF-8")))?;
                    LandmarkSet::from_json(text)?
                }
                None => match &detector {
                    Some(d) => d.detect(img)?,
                    None => {
                        return Err(ServiceError::Unprocessable(format!(
                            "`{name}` missing and no landmark detector configured"
                        )))
                    }
                },
            };
            lms.check_bounds(img.height(), img.width())
                .map_err(|e| ServiceError::Unprocessable(e.to_string()))?;
            Ok(lms)
        };
        let target = image("target")?;
        let reference = image("reference")?;
        let tl = landmarks("target_landmarks", &target)?;
        let rl = landmarks("reference_landmarks", &reference)?;
        store.create(NewSession {
            target: &target,
            reference: &reference,
            target_landmarks: &tl,
            reference_landmarks: &rl,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Reply<Json<SessionState>> {
    let store = state.store.clone();
    let key = id.clone();
    Ok(Json(
        blocking(&state, Some(&id), move || Ok(store.get(&key)?.state)).await?,
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractRequest {
    /// bagnet, gmm, chroma or residual; bagnet when an extractor is loaded, else chroma.
    pub method: Option<String>,
    pub percentile: Option<f64>,
    pub hue_band: Option<f64>,
    pub saturation_band: Option<f64>,
    pub residual_threshold: Option<f32>,
    pub extract_on: ExtractOn,
}

pub async fn extract(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<ExtractRequest>>,
) -> Reply<Json<Value>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let st = state.clone();
    let key = id.clone();
    let out = blocking(&state, Some(&id), move || {
        let mut session = st.store.get(&key)?;
        let method = req.method.clone().unwrap_or_else(|| {
            if st.extractor.is_some() {
                "bagnet"
            } else {
                "chroma"
            }
            .into()
        });
        let source = match method.as_str() {
            "bagnet" => MaskSource::Extractor(
                st.extractor
                    .as_deref()
                    .ok_or_else(|| ServiceError::BadRequest("no extractor configured".into()))?,
            ),
            "gmm" => MaskSource::Gmm {
                model: None,
                options: GmmOptions {
                    percentile: req.percentile.unwrap_or(5.0),
                    ..GmmOptions::default()
                },
            },
            "chroma" => {
                let d = ChromaBands::default();
                MaskSource::Chroma(ChromaBands {
                    hue: req.hue_band.unwrap_or(d.hue),
                    saturation: req.saturation_band.unwrap_or(d.saturation),
                })
            }
            "residual" => MaskSource::SkinResidual {
                threshold: req.residual_threshold.unwrap_or(0.1),
            },
            other => {
                return Err(ServiceError::BadRequest(format!(
                    "unknown method `{other}`"
                )))
            }
        };
        let mask = extract_onto(
            &source,
            &session.target()?,
            &session.target_landmarks()?,
            &session.reference()?,
            &session.reference_landmarks()?,
            req.extract_on,
        )?;
        let version = session.push_mask(&encode_mask_png(&mask)?, &method, Status::Extracted)?;
        Ok(json!({ "version": version, "method": method, "status": session.state.status }))
    })
    .await?;
    Ok(Json(out))
}

pub async fn get_mask(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Reply<impl IntoResponse> {
    let store = state.store.clone();
    let key = id.clone();
    let (version, bytes) = blocking(&state, Some(&id), move || {
        let s = store.get(&key)?;
        let bytes = s.mask_bytes()?;
        Ok((s.state.current_mask().map_or(0, |m| m.version), bytes))
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (MASK_VERSION, version.to_string()),
        ],
        bytes,
    ))
}

/// Stores the uploaded PNG verbatim as a new mask version.
pub async fn put_mask(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply<Json<Value>> {
    let store = state.store.clone();
    let key = id.clone();
    let out = blocking(&state, Some(&id), move || {
        let mut s = store.get(&key)?;
        let mask = decode_mask(&body)?;
        let expected = (s.state.height, s.state.width);
        if mask.dims() != expected {
            return Err(ServiceError::Unprocessable(format!(
                "mask is {}x{}, session images are {}x{}",
                mask.width(),
                mask.height(),
                expected.1,
                expected.0
            )));
        }
        let version = s.push_mask(&body, "upload", Status::Edited)?;
        Ok(json!({ "version": version, "status": s.state.status }))
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplyRequest {
    /// Output the composite without the generator.
    pub bypass: bool,
    pub color_offset: Option<[f32; 3]>,
}

pub async fn apply(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<ApplyRequest>>,
) -> Reply<Json<Value>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let st = state.clone();
    let key = id.clone();
    let out = blocking(&state, Some(&id), move || {
        let mut s = st.store.get(&key)?;
        if s.state.status == Status::Created {
            return Err(ServiceError::Conflict(
                "extract or upload a mask before applying".into(),
            ));
        }
        let generator = match (req.bypass, st.generator.as_deref()) {
            (true, _) => None,
            (false, Some(g)) => Some(g),
            (false, None) => {
                return Err(ServiceError::BadRequest(
                    "no generator configured; request bypass".into(),
                ))
            }
        };
        let target = s.target()?;
        let mask = s.mask()?;
        let s1 = stage_one(
            None,
            Some(&mask),
            &target,
            &s.target_landmarks()?,
            &s.reference()?,
            &s.reference_landmarks()?,
            ExtractOn::Warped,
        )?;
        let mut result = makeupbag_models::pipeline::apply_stage(generator, &target, &s1)?;
        if let Some(off) = req.color_offset {
            result = color_offset(&result, &s1.mask, off)?;
        }
        let version = s.push_result(&encode_png(&result)?)?;
        Ok(json!({ "version": version, "status": s.state.status }))
    })
    .await?;
    Ok(Json(out))
}

pub async fn get_result(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Reply<impl IntoResponse> {
    let store = state.store.clone();
    let key = id.clone();
    let (version, bytes) = blocking(&state, Some(&id), move || {
        let s = store.get(&key)?;
        Ok((s.state.results, s.result_bytes()?))
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (RESULT_VERSION, version.to_string()),
        ],
        bytes,
    ))
}

/// Region layers as base64 PNGs (255 inside the region).
pub async fn get_regions(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Reply<Json<Value>> {
    let store = state.store.clone();
    let key = id.clone();
    let out = blocking(&state, Some(&id), move || {
        let s = store.get(&key)?;
        let enc = region_encoding(&s.target_landmarks()?, s.state.height, s.state.width)?;
        let mut layers = BTreeMap::new();
        for r in Region::ALL {
            layers.insert(
                r.as_str(),
                STANDARD.encode(encode_mask_png(&enc.to_mask(r))?),
            );
        }
        Ok(json!({ "height": s.state.height, "width": s.state.width, "layers": layers }))
    })
    .await?;
    Ok(Json(out))
}
