use nalgebra::{Rotation3, Vector3};
use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use super::{GeometryError, Intrinsics};

/// Number of rectilinear views extracted per panorama. Horizontal ring
/// only; the top and bottom are skipped.
pub const STANDARD_VIEW_COUNT: usize = 8;
/// Field of view of each standard view (90 degrees), overlapping at 45
/// degree yaw spacing.
pub const STANDARD_VIEW_FOV: f64 = PI / 2.0;

/// 8-bit raster, grayscale (1 channel) or RGB (3 channels), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Writes PGM (P5) for grayscale or PPM (P6) for RGB.
    pub fn write_pnm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(w, "{}\n{} {}\n255\n", magic, self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_pnm<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cursor = io::Cursor::new(&bytes);
        let magic = next_pnm_token(&mut cursor)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unsupported PNM magic {other:?}"),
                ))
            }
        };
        let width: usize = parse_pnm_int(&mut cursor)?;
        let height: usize = parse_pnm_int(&mut cursor)?;
        let maxval: usize = parse_pnm_int(&mut cursor)?;
        if maxval != 255 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("only maxval 255 supported, got {maxval}"),
            ));
        }
        let start = cursor.position() as usize;
        let need = width * height * channels;
        let pixel_bytes = &bytes[start..];
        if pixel_bytes.len() < need {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "truncated PNM pixel data",
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: pixel_bytes[..need].to_vec(),
        })
    }

    /// Bilinear sample at continuous coordinates with pixel centers on the
    /// half-integer grid. Wraps horizontally, clamps vertically to the pole
    /// rows.
    pub fn sample_wrapped(&self, u: f64, v: f64, out: &mut [f64]) {
        let x = u - 0.5;
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor();
        let y0 = y.floor() as usize;
        let fx = x - x0;
        let fy = y - y0 as f64;
        let w = self.width as i64;
        let xi0 = (x0 as i64).rem_euclid(w) as usize;
        let xi1 = (x0 as i64 + 1).rem_euclid(w) as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        for c in 0..self.channels {
            let p00 = self.get(xi0, y0, c) as f64;
            let p10 = self.get(xi1, y0, c) as f64;
            let p01 = self.get(xi0, y1, c) as f64;
            let p11 = self.get(xi1, y1, c) as f64;
            out[c] = p00 * (1.0 - fx) * (1.0 - fy)
                + p10 * fx * (1.0 - fy)
                + p01 * (1.0 - fx) * fy
                + p11 * fx * fy;
        }
    }
}

/// Spherical panorama in plate carree projection: pixel coordinates are
/// linear in yaw and pitch, with width exactly twice the height.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoImage {
    raster: Raster,
}

impl PanoImage {
    pub fn new(raster: Raster) -> Result<Self, GeometryError> {
        if raster.width != 2 * raster.height {
            return Err(GeometryError::BadPanoSize {
                width: raster.width,
                height: raster.height,
            });
        }
        Ok(Self { raster })
    }

    pub fn width(&self) -> usize {
        self.raster.width
    }

    pub fn height(&self) -> usize {
        self.raster.height
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn raster_mut(&mut self) -> &mut Raster {
        &mut self.raster
    }
}

/// Maps a unit direction in the panorama frame (x right, y down, z forward)
/// to real-valued plate carree pixel coordinates. Yaw is measured about the
/// vertical axis, zero at forward; pitch is positive upward. The left image
/// edge is yaw -pi, the top row pitch +pi/2.
pub fn pano_pixel_of_direction(dir: &Vector3<f64>, width: usize, height: usize) -> (f64, f64) {
    debug_assert!((dir.norm() - 1.0).abs() < 1e-9, "direction must be unit");
    let yaw = if dir.x == 0.0 && dir.z == 0.0 {
        0.0
    } else {
        dir.x.atan2(dir.z)
    };
    let pitch = (-dir.y).clamp(-1.0, 1.0).asin();
    let u = (yaw + PI) / (2.0 * PI) * width as f64;
    let v = (PI / 2.0 - pitch) / PI * height as f64;
    (u, v)
}

/// Inverse of [`pano_pixel_of_direction`].
pub fn direction_of_pano_pixel(u: f64, v: f64, width: usize, height: usize) -> Vector3<f64> {
    let yaw = u / width as f64 * 2.0 * PI - PI;
    let pitch = PI / 2.0 - v / height as f64 * PI;
    let cp = pitch.cos();
    Vector3::new(yaw.sin() * cp, -pitch.sin(), yaw.cos() * cp)
}

/// A rectilinear (pinhole) rendering of a panorama sector.
#[derive(Debug, Clone)]
pub struct RectView {
    pub image: Raster,
    pub intrinsics: Intrinsics,
    /// Yaw of the view's optical axis in the panorama frame, radians.
    pub yaw: f64,
    pub pitch: f64,
}

/// Rotation taking view-frame directions into the panorama frame for a view
/// centered at (yaw, pitch).
pub fn view_rotation(yaw: f64, pitch: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch)
}

/// Renders a square rectilinear view of `fov` radians centered at
/// (yaw, pitch). The implied pinhole has f = (out_size/2)/tan(fov/2) and the
/// principal point at the image center; the returned intrinsics let callers
/// treat the view as a distortion-free pinhole camera.
pub fn extract_rectilinear(
    pano: &PanoImage,
    yaw: f64,
    pitch: f64,
    fov: f64,
    out_size: usize,
) -> Result<RectView, GeometryError> {
    let intrinsics = view_intrinsics(fov, out_size)?;
    let rot = view_rotation(yaw, pitch);
    let mut image = Raster::new(out_size, out_size, pano.raster.channels);
    let mut sample = [0.0f64; 3];
    for iy in 0..out_size {
        for ix in 0..out_size {
            let ray = intrinsics.ray(ix as f64 + 0.5, iy as f64 + 0.5);
            let dir = (rot * ray).normalize();
            let (pu, pv) = pano_pixel_of_direction(&dir, pano.width(), pano.height());
            pano.raster
                .sample_wrapped(pu, pv, &mut sample[..pano.raster.channels]);
            for c in 0..pano.raster.channels {
                image.set(ix, iy, c, sample[c].round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(RectView {
        image,
        intrinsics,
        yaw,
        pitch,
    })
}

/// Pinhole intrinsics of a square rectilinear view without rendering it.
pub fn view_intrinsics(fov: f64, out_size: usize) -> Result<Intrinsics, GeometryError> {
    if !(fov > 0.0 && fov < PI) {
        return Err(GeometryError::BadFov(fov));
    }
    let f = (out_size as f64 / 2.0) / (fov / 2.0).tan();
    Intrinsics::new(
        f,
        f,
        out_size as f64 / 2.0,
        out_size as f64 / 2.0,
        out_size,
        out_size,
    )
}

/// The eight standard views of a panorama: 90 degree fov, pitch zero, yaws
/// at 45 degree increments so neighbors share half their horizontal field.
pub fn standard_views(pano: &PanoImage, out_size: usize) -> Vec<RectView> {
    (0..STANDARD_VIEW_COUNT)
        .map(|i| {
            let yaw = i as f64 * 2.0 * PI / STANDARD_VIEW_COUNT as f64;
            extract_rectilinear(pano, yaw, 0.0, STANDARD_VIEW_FOV, out_size)
                .expect("standard fov is valid")
        })
        .collect()
}

/// Yaw angles (radians) of the standard views.
pub fn standard_view_yaws() -> [f64; STANDARD_VIEW_COUNT] {
    let mut yaws = [0.0; STANDARD_VIEW_COUNT];
    for (i, y) in yaws.iter_mut().enumerate() {
        *y = i as f64 * 2.0 * PI / STANDARD_VIEW_COUNT as f64;
    }
    yaws
}

fn next_pnm_token<R: BufRead>(r: &mut R) -> io::Result<String> {
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    if token.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "missing PNM header token",
        ));
    }
    Ok(token)
}

fn parse_pnm_int<R: BufRead>(r: &mut R) -> io::Result<usize> {
    next_pnm_token(r)?
        .parse()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("bad PNM integer: {e}")))
}
