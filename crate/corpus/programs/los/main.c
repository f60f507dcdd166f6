int line_of_sight(int x0, int y0, int x1, int y1, int sx, int sy, int size, int n, int frac);

int main(int a, int b) {
    int x0 = a & 63;
    int y0 = (a >> 6) & 63;
    int x1 = b & 63;
    int y1 = (b >> 6) & 63;
    int size = 1 + ((a >> 12) & 7);
    int steps = 8 + ((b >> 12) & 31);
    int blocked = 0;
    for (int k = 0; k < 4; k++) {
        int r = line_of_sight(x0, y0, x1, y1, 8 + 12 * k, 20 + ((b >> (k + 3)) & 15), size, steps, 6);
        if (r >= 0)
            blocked = blocked + 1;
    }
    return blocked;
}
