use std::collections::HashSet;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Face {
    Yz,
    Zx,
    Xy,
}

/// A point on one of the three boundary-face families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryPoint {
    Yz { j: usize, k: usize },
    Zx { k: usize, i: usize },
    Xy { j: usize, i: usize },
}

impl BoundaryPoint {
    pub fn face(&self) -> Face {
        match self {
            BoundaryPoint::Yz { .. } => Face::Yz,
            BoundaryPoint::Zx { .. } => Face::Zx,
            BoundaryPoint::Xy { .. } => Face::Xy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GidTarget {
    Point(BoundaryPoint),
    Padding,
}

pub fn boundary_range(ip: usize, jp: usize, kp: usize) -> usize {
    jp * kp + kp * ip + jp * ip
}

/// Decodes a global work-item id with the kernel's branch arithmetic.
pub fn map_boundary_gid(gid: usize, ip: usize, jp: usize, kp: usize) -> GidTarget {
    let yz = jp * kp;
    let zx = yz + kp * ip;
    if gid < yz {
        GidTarget::Point(BoundaryPoint::Yz { k: gid / jp, j: gid % jp })
    } else if gid < zx {
        let r = gid - yz;
        GidTarget::Point(BoundaryPoint::Zx { k: r / ip, i: r % ip })
    } else if gid < boundary_range(ip, jp, kp) {
        let r = gid - zx;
        GidTarget::Point(BoundaryPoint::Xy { j: r / ip, i: r % ip })
    } else {
        GidTarget::Padding
    }
}

/// Rounds `range` up to a multiple of `nthreads * nunits`.
pub fn padded_range(range: usize, nthreads: usize, nunits: usize) -> usize {
    let m = nthreads * nunits;
    match range % m {
        0 => range,
        rem => range + (m - rem),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub ip: usize,
    pub jp: usize,
    pub kp: usize,
    pub nthreads: usize,
    pub nunits: usize,
    pub boundary_range: usize,
    pub padded_range: usize,
    pub covered: usize,
    pub padding: usize,
    pub yz: usize,
    pub zx: usize,
    pub xy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditViolation {
    pub gid: usize,
    pub reason: String,
}

/// Enumerates every gid of the padded range and checks that each boundary
/// point is hit exactly once, that the hit point lies inside its face, and
/// that every gid past the boundary range is padding.
pub fn audit_boundary(
    ip: usize,
    jp: usize,
    kp: usize,
    nthreads: usize,
    nunits: usize,
) -> Result<AuditReport, AuditViolation> {
    let range = boundary_range(ip, jp, kp);
    let padded = padded_range(range, nthreads, nunits);
    let mut seen = HashSet::with_capacity(range);
    let mut report = AuditReport {
        ip,
        jp,
        kp,
        nthreads,
        nunits,
        boundary_range: range,
        padded_range: padded,
        covered: 0,
        padding: 0,
        yz: 0,
        zx: 0,
        xy: 0,
    };
    for gid in 0..padded {
        match map_boundary_gid(gid, ip, jp, kp) {
            GidTarget::Padding if gid >= range => report.padding += 1,
            GidTarget::Padding => {
                return Err(AuditViolation { gid, reason: "boundary gid decoded as padding".into() })
            }
            GidTarget::Point(_) if gid >= range => {
                return Err(AuditViolation { gid, reason: "padding gid decoded as a boundary point".into() })
            }
            GidTarget::Point(pt) => {
                let inside = match pt {
                    BoundaryPoint::Yz { j, k } => j < jp && k < kp,
                    BoundaryPoint::Zx { k, i } => k < kp && i < ip,
                    BoundaryPoint::Xy { j, i } => j < jp && i < ip,
                };
                if !inside {
                    return Err(AuditViolation { gid, reason: format!("{pt:?} lies outside its face") });
                }
                if !seen.insert(pt) {
                    return Err(AuditViolation { gid, reason: format!("{pt:?} decoded twice") });
                }
                match pt.face() {
                    Face::Yz => report.yz += 1,
                    Face::Zx => report.zx += 1,
                    Face::Xy => report.xy += 1,
                }
                report.covered += 1;
            }
        }
    }
    let expected = [(report.yz, jp * kp, "YZ"), (report.zx, kp * ip, "ZX"), (report.xy, jp * ip, "XY")];
    if let Some((got, want, name)) = expected.into_iter().find(|(got, want, _)| got != want) {
        return Err(AuditViolation { gid: range, reason: format!("{name} face covered {got} of {want} points") });
    }
    Ok(report)
}
