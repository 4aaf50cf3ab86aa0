int clamp8(int v)
{
  if (v < 0)
    return 0;
  if (v > 7)
    return 7;
  return v;
}

int mix(int a, int b)
{
  return clamp8(a + b - 4);
}

void mix_all(int n, int A[const restrict static n], int B[const restrict static n], int C[const restrict static n])
{
  for (int i = 0; i < n; i++)
    C[i] = mix(A[i], B[i]);
}
