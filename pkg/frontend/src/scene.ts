/**
 * Three.js scene: wire rendered from the server-exported path JSON (same
 * geometry the simulator uses), the ring tinted by the server's accuracy
 * scalar, and an instrument marker. Fixed "surgeon's view" camera;
 * orbiting is allowed only between trials.
 */

import * as THREE from "three";
import { accuracyHex } from "./color.js";
import type { Quat, Vec3 } from "./protocol.js";
import type { RenderPose } from "./viewstate.js";

export interface PathJson {
  control_points: number[][];
  twist_angle: number;
  length: number;
  samples: Array<{ s: number; p: number[]; q: number[] }>;
}

const RING_RADIUS = 0.02; // display-only; collisions live on the server
const WIRE_RADIUS = 0.0025;

export class Scene {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene: THREE.Scene;
  readonly camera: THREE.PerspectiveCamera;
  private readonly ring: THREE.Mesh;
  private readonly ringMaterial: THREE.MeshStandardMaterial;
  private readonly instrument: THREE.Mesh;

  constructor(canvas: HTMLCanvasElement, path: PathJson) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x101418);

    const points = path.samples.map((s) => new THREE.Vector3(s.p[0], s.p[1], s.p[2]));
    if (points.length < 2) throw new Error("path JSON has too few samples");
    const curve = new THREE.CatmullRomCurve3(points, false, "catmullrom");
    const wire = new THREE.Mesh(
      new THREE.TubeGeometry(curve, Math.max(64, points.length), WIRE_RADIUS, 10, false),
      new THREE.MeshStandardMaterial({ color: 0x9aa4ad, metalness: 0.6, roughness: 0.35 }),
    );
    this.scene.add(wire);

    for (const [p, color] of [
      [points[0], 0x2ecc71],
      [points[points.length - 1], 0x3498db],
    ] as Array<[THREE.Vector3, number]>) {
      const marker = new THREE.Mesh(
        new THREE.SphereGeometry(WIRE_RADIUS * 3, 16, 12),
        new THREE.MeshStandardMaterial({ color }),
      );
      marker.position.copy(p);
      this.scene.add(marker);
    }

    this.ringMaterial = new THREE.MeshStandardMaterial({
      color: accuracyHex(1),
      metalness: 0.2,
      roughness: 0.5,
    });
    this.ring = new THREE.Mesh(
      new THREE.TorusGeometry(RING_RADIUS, WIRE_RADIUS * 1.6, 12, 48),
      this.ringMaterial,
    );
    this.scene.add(this.ring);

    this.instrument = new THREE.Mesh(
      new THREE.ConeGeometry(0.006, 0.03, 12),
      new THREE.MeshStandardMaterial({ color: 0xd0d4d8 }),
    );
    this.scene.add(this.instrument);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(0.3, 0.5, 0.6);
    this.scene.add(key);

    const box = new THREE.Box3().setFromPoints(points);
    const center = box.getCenter(new THREE.Vector3());
    const size = box.getSize(new THREE.Vector3()).length();
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 10);
    this.camera.position.set(center.x, center.y + size * 0.4, center.z + size * 1.4);
    this.camera.lookAt(center);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / Math.max(1, height);
    this.camera.updateProjectionMatrix();
  }

  update(pose: RenderPose, colorScalar: number): void {
    setPose(this.ring, pose.ringPosition, pose.ringRotation);
    setPose(this.instrument, pose.instrumentPosition, pose.instrumentRotation);
    this.ringMaterial.color.setHex(accuracyHex(colorScalar));
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}

function setPose(mesh: THREE.Mesh, p: Vec3, q: Quat): void {
  mesh.position.set(p[0], p[1], p[2]);
  // Server quaternions are (w, x, y, z); three.js takes (x, y, z, w).
  mesh.quaternion.set(q[1], q[2], q[3], q[0]);
}
