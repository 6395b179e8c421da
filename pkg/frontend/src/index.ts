export * from "./types";
export * from "./lasso";
export * from "./canvas";
export * from "./contours";
export * from "./scene";
export * from "./panels";
export * from "./api";
