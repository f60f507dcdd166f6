/* 2D line of sight: walks the segment (x0,y0)-(x1,y1) in n steps using
   fixed-point coordinates with `frac` fractional bits and reports the first
   step whose rounded point lies inside the square with corner (sx,sy) and
   side `size`, or -1 when the whole segment is clear. */
int line_of_sight(int x0, int y0, int x1, int y1, int sx, int sy, int size, int n, int frac) {
    int left = sx;
    int right = sx + size;
    int top = sy;
    int bottom = sy + size;
    int x = x0 << frac;
    int y = y0 << frac;
    int dx = ((x1 - x0) << frac) / n;
    int dy = ((y1 - y0) << frac) / n;
    int round = (1 << frac) >> 1;
    int blocked = -1;
    for (int i = 0; i <= n; i++) {
        int px = (x + round) >> frac;
        int py = (y + round) >> frac;
        if (px >= left && px <= right && py >= top && py <= bottom) {
            blocked = i;
            break;
        }
        x += dx;
        y += dy;
    }
    return blocked;
}
